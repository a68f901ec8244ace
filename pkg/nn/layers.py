"""
Layers of the numpy network kit.

All tensors are float64 and channel-first: (N, C, H, W) for images,
(N, C, L) for sequences. A layer keeps the state its backward pass needs
only when `forward(..., training=True)`; inference calls are stateless and
may run concurrently on one model. Forward products run per sample, so a
sample's output does not depend on the batch it is evaluated in.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError


def glorot_uniform(rng: Optional[np.random.Generator], shape: Tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform in ±√(6/(fan_in+fan_out)); zeros when `rng` is None."""
    if rng is None:
        return np.zeros(shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer(ABC):
    """
    Base class for all layers.

    Subclasses fill `params` (name → array) in __init__ and write the
    matching entries of `grads` in backward().
    """

    kind: str = "layer"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self._cache: Any = None

    @abstractmethod
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> Dict[str, Any]:
        """Constructor arguments (without weights) for serialization."""
        return {}

    def pattern(self) -> Optional[np.ndarray]:
        """Piecewise-linear branch taken on the last training forward (ReLU signs, pool argmax)."""
        return None

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward() without a training forward()")

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"<{self.__class__.__name__}({args})>"


# ── convolution ───────────────────────────────────────────────────────

class Conv2D(Layer):
    """Stride-1 2D convolution with symmetric zero padding (im2col + matmul)."""

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 5, pad: int = 2,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.pad = kernel, pad
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        self.params["W"] = glorot_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, fan_out)
        self.params["b"] = np.zeros(out_channels)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "pad": self.pad}

    def _columns(self, x: np.ndarray):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.kind} expects (N, {self.in_channels}, H, W), got {x.shape}")
        p, k = self.pad, self.kernel
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))            # (N, C, Ho, Wo, k, k)
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return xp.shape, (n, ho, wo), cols

    def forward(self, x, training=False):
        xp_shape, (n, ho, wo), cols = self._columns(x)
        w = self.params["W"].reshape(self.out_channels, -1)
        out = np.matmul(cols.reshape(n, ho * wo, -1), w.T) + self.params["b"]
        if training:
            self._cache = (xp_shape, (n, ho, wo), cols)
        return out.reshape(n, ho, wo, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        self._need_cache()
        xp_shape, (n, ho, wo), cols = self._cache
        k, c = self.kernel, self.in_channels
        g = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.grads["W"] = (g.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=0)

        dcols = (g @ self.params["W"].reshape(self.out_channels, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        p = self.pad
        return dxp[:, :, p:xp_shape[2] - p, p:xp_shape[3] - p]


class Conv1D(Layer):
    """Stride-1 1D convolution over (N, C, L) with symmetric zero padding."""

    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 5, pad: int = 2,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.pad = kernel, pad
        self.params["W"] = glorot_uniform(rng, (out_channels, in_channels, kernel),
                                          in_channels * kernel, out_channels * kernel)
        self.params["b"] = np.zeros(out_channels)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "pad": self.pad}

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.kind} expects (N, {self.in_channels}, L), got {x.shape}")
        p, k = self.pad, self.kernel
        xp = np.pad(x, ((0, 0), (0, 0), (p, p)))
        win = sliding_window_view(xp, k, axis=2)                        # (N, C, Lo, k)
        n, c, lo = win.shape[:3]
        cols = win.transpose(0, 2, 1, 3).reshape(n * lo, c * k)
        w = self.params["W"].reshape(self.out_channels, -1)
        out = np.matmul(cols.reshape(n, lo, -1), w.T) + self.params["b"]
        if training:
            self._cache = (xp.shape, (n, lo), cols)
        return out.reshape(n, lo, self.out_channels).transpose(0, 2, 1)

    def backward(self, grad):
        self._need_cache()
        xp_shape, (n, lo), cols = self._cache
        k, c = self.kernel, self.in_channels
        g = grad.transpose(0, 2, 1).reshape(-1, self.out_channels)
        self.grads["W"] = (g.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=0)

        dcols = (g @ self.params["W"].reshape(self.out_channels, -1)).reshape(n, lo, c, k)
        dxp = np.zeros(xp_shape)
        for i in range(k):
            dxp[:, :, i:i + lo] += dcols[:, :, :, i].transpose(0, 2, 1)
        return dxp[:, :, self.pad:xp_shape[2] - self.pad]


# ── activations / pooling / reshaping ─────────────────────────────────

class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        mask = x > 0
        if training:
            self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, grad):
        self._need_cache()
        return grad * self._cache

    def pattern(self):
        return None if self._cache is None else self._cache.ravel()


class MaxPool2D(Layer):
    """2×2 max pooling, stride 2; ties go to the first element in row-major order."""

    kind = "maxpool2d"

    def forward(self, x, training=False):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"{self.kind} needs even height and width, got {x.shape}")
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        idx = blocks.argmax(axis=-1)
        if training:
            self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        self._need_cache()
        (n, c, h, w), idx = self._cache
        routed = (np.arange(4) == idx[..., None]) * grad[..., None]   # (n, c, h/2, w/2, 4)
        return routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)

    def pattern(self):
        return None if self._cache is None else self._cache[1].ravel()


class MaxPool1D(Layer):
    """Pairwise max pooling along the sequence axis."""

    kind = "maxpool1d"

    def forward(self, x, training=False):
        n, c, length = x.shape
        if length % 2:
            raise ShapeError(f"{self.kind} needs an even length, got {x.shape}")
        pairs = x.reshape(n, c, length // 2, 2)
        idx = pairs.argmax(axis=-1)
        if training:
            self._cache = (x.shape, idx)
        return np.take_along_axis(pairs, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        self._need_cache()
        shape, idx = self._cache
        return ((np.arange(2) == idx[..., None]) * grad[..., None]).reshape(shape)

    def pattern(self):
        return None if self._cache is None else self._cache[1].ravel()


class Upsample1D(Layer):
    """Nearest-neighbour ×2 upsampling along the sequence axis."""

    kind = "upsample1d"

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return np.repeat(x, 2, axis=-1)

    def backward(self, grad):
        self._need_cache()
        n, c, length = self._cache
        return grad.reshape(n, c, length, 2).sum(axis=-1)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        self._need_cache()
        return grad.reshape(self._cache)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.params["W"] = glorot_uniform(rng, (in_features, out_features), in_features, out_features)
        self.params["b"] = np.zeros(out_features)

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.kind} expects (N, {self.in_features}), got {x.shape}")
        if training:
            self._cache = x
        return np.matmul(x[:, None, :], self.params["W"])[:, 0, :] + self.params["b"]

    def backward(self, grad):
        self._need_cache()
        self.grads["W"] = self._cache.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class RepeatVector(Layer):
    """(N, C) → (N, C, L) by repetition along a new sequence axis."""

    kind = "repeat"

    def __init__(self, length: int):
        super().__init__()
        self.length = length

    def config(self):
        return {"length": self.length}

    def forward(self, x, training=False):
        if training:
            self._cache = True
        return np.repeat(x[:, :, None], self.length, axis=2)

    def backward(self, grad):
        self._need_cache()
        return grad.sum(axis=2)
