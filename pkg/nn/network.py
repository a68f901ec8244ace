"""
Sequential networks and losses.
"""
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError
from nn.layers import (Conv1D, Conv2D, Dense, Flatten, Layer, MaxPool1D, MaxPool2D, ReLU,
                       RepeatVector, Upsample1D)
from nn.lstm import LSTM

# Layer registry for model files
LAYER_REGISTRY = {
    cls.kind: cls
    for cls in (Conv2D, Conv1D, ReLU, MaxPool2D, MaxPool1D, Upsample1D, Flatten, Dense,
                RepeatVector, LSTM)
}


def build_layer(spec: Dict[str, Any]) -> Layer:
    """Instantiate a zero-initialized layer from {"type": kind, **config}."""
    spec = dict(spec)
    kind = spec.pop("type")
    if kind not in LAYER_REGISTRY:
        raise ValueError(f"Unknown layer type: {kind}. Available: {list(LAYER_REGISTRY.keys())}")
    return LAYER_REGISTRY[kind](**spec)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Sequential:
    """An ordered stack of layers trained end to end."""

    def __init__(self, layers: List[Layer]):
        self.layers = list(layers)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self) -> Iterator[Tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                yield f"{i}.{key}", value

    def named_grads(self) -> Iterator[Tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for key in layer.params:
                yield f"{i}.{key}", layer.grads[key]

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for _, v in self.named_params()))

    def pattern(self) -> np.ndarray:
        parts = [p for p in (layer.pattern() for layer in self.layers) if p is not None]
        return np.concatenate(parts) if parts else np.zeros(0)

    def architecture(self) -> List[Dict[str, Any]]:
        return [{"type": layer.kind, **layer.config()} for layer in self.layers]

    @classmethod
    def from_architecture(cls, spec: List[Dict[str, Any]]) -> "Sequential":
        return cls([build_layer(s) for s in spec])

    def load_params(self, params: Dict[str, np.ndarray]):
        for name, value in self.named_params():
            if name not in params:
                raise ShapeError(f"missing parameter {name}")
            if params[name].shape != value.shape:
                raise ShapeError(f"parameter {name}: shape {params[name].shape}, expected {value.shape}")
            value[...] = params[name]

    def copy_params(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_params()}

    def __repr__(self) -> str:
        return f"<Sequential: {len(self.layers)} layers, {self.parameter_count} params>"


# ── losses ────────────────────────────────────────────────────────────

class SoftmaxCrossEntropy:
    """Mean cross-entropy of softmax(logits) against integer labels."""

    def __init__(self):
        self._cache: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def forward(self, logits: np.ndarray, labels: np.ndarray) -> float:
        labels = np.asarray(labels, dtype=np.int64)
        z = logits - logits.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        self._cache = (np.exp(log_probs), labels)
        return float(-log_probs[np.arange(labels.size), labels].mean())

    def backward(self) -> np.ndarray:
        probs, labels = self._cache
        grad = probs.copy()
        grad[np.arange(labels.size), labels] -= 1.0
        return grad / labels.size


class MeanSquaredError:
    def __init__(self):
        self._cache = None

    def forward(self, pred: np.ndarray, target: np.ndarray) -> float:
        if pred.shape != target.shape:
            raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
        diff = pred - target
        self._cache = diff
        return float(np.mean(diff ** 2))

    def backward(self) -> np.ndarray:
        return 2.0 * self._cache / self._cache.size


LOSS_REGISTRY = {
    "cross_entropy": SoftmaxCrossEntropy,
    "mse": MeanSquaredError,
}


def create_loss(name: str):
    if name not in LOSS_REGISTRY:
        raise ValueError(f"Unknown loss: {name}. Available: {list(LOSS_REGISTRY.keys())}")
    return LOSS_REGISTRY[name]()
