"""
Parameterizable CNN pixel classifier [segmentSize-filterA-filterB].

    conv 5×5 (filterA, pad 2) → relu → maxpool 2×2
    conv 5×5 (filterB, pad 2) → relu → maxpool 2×2
    dense (filterB·(s/4)² → 2) → softmax

Class 1 is "pore", class 0 is "background".
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, ShapeError
from nn.layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU
from nn.network import Sequential, softmax

BACKGROUND_CLASS = 0
PORE_CLASS = 1


def parse_arch(text: str) -> Tuple[int, int, int]:
    """"20-8-8" → (20, 8, 8)."""
    try:
        s, a, b = (int(p) for p in text.split("-"))
    except ValueError:
        raise ConfigError(f"architecture must look like 'segment-filterA-filterB', got '{text}'")
    return s, a, b


@dataclass
class CnnModel:
    segment_size: int
    filter_a: int
    filter_b: int
    network: Sequential
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def arch(self) -> str:
        return f"{self.segment_size}-{self.filter_a}-{self.filter_b}"

    @property
    def parameter_count(self) -> int:
        return self.network.parameter_count

    def feature_shapes(self) -> list:
        """(H, W, C) after each conv/pool stage, then the dense input length."""
        s, a, b = self.segment_size, self.filter_a, self.filter_b
        return [(s, s, a), (s // 2, s // 2, a), (s // 2, s // 2, b), (s // 4, s // 4, b), b * (s // 4) ** 2]

    def _check(self, patches: np.ndarray) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim == 2:
            patches = patches[None]
        s = self.segment_size
        if patches.ndim != 3 or patches.shape[1:] != (s, s):
            raise ShapeError(f"patches must be ({s}, {s}) or (N, {s}, {s}), got {patches.shape}")
        return patches[:, None, :, :]

    def logits(self, patches: np.ndarray) -> np.ndarray:
        return self.network.forward(self._check(patches))

    def predict_proba(self, patches: np.ndarray) -> np.ndarray:
        """(N, 2) class probabilities."""
        return softmax(self.logits(patches))


def build_network(segment_size: int, filter_a: int, filter_b: int,
                  rng: np.random.Generator = None) -> Sequential:
    return Sequential([
        Conv2D(1, filter_a, kernel=5, pad=2, rng=rng),
        ReLU(),
        MaxPool2D(),
        Conv2D(filter_a, filter_b, kernel=5, pad=2, rng=rng),
        ReLU(),
        MaxPool2D(),
        Flatten(),
        Dense(filter_b * (segment_size // 4) ** 2, 2, rng=rng),
    ])


def build(segment_size: int = config.CNN_ARCH[0], filter_a: int = config.CNN_ARCH[1],
          filter_b: int = config.CNN_ARCH[2], seed: int = 0) -> CnnModel:
    """Fresh model with seeded scaled-uniform weights and zero biases.

    Raises:
        ShapeError: segment_size not a positive multiple of 4.
        ConfigError: a filter count below 1.
    """
    if segment_size < 4 or segment_size % 4:
        raise ShapeError(f"segment size must be a positive multiple of 4, got {segment_size}")
    if filter_a < 1 or filter_b < 1:
        raise ConfigError(f"filter counts must be >= 1, got {filter_a}, {filter_b}")
    network = build_network(segment_size, filter_a, filter_b, np.random.default_rng(seed))
    return CnnModel(segment_size, filter_a, filter_b, network, metadata={"init_seed": seed})


def forward(model: CnnModel, patch: np.ndarray) -> np.ndarray:
    """Softmax pair (background, pore) for one segment_size² patch."""
    return model.predict_proba(patch)[0]
