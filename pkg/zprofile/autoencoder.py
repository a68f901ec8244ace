"""
Sequence autoencoders for z-profiles (positive training on baseline data).

conv:  conv(1→c) relu pool · conv(c→1) pool  |  up conv(1→c) relu · up conv(c→1)
       bottleneck = ¼ of the (edge-padded to a multiple of 4) length
lstm:  LSTM(1→H) last state · repeat L · LSTM(H→H) sequence · conv 1×1 (H→1)
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import Field

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ManifestError, ShapeError
from nn.layers import Conv1D, MaxPool1D, ReLU, RepeatVector, Upsample1D
from nn.lstm import LSTM
from nn.network import Sequential
from nn.serialization import load_model, save_model
from nn.trainer import SGDConfig, TrainHistory, fit

logger = logging.getLogger(__name__)

MODEL_KIND = "zprofile_ae"


class AETrainConfig(SGDConfig):
    learning_rate: float = Field(default=config.AE_LEARNING_RATE, ge=0)
    epochs: int = Field(default=config.AE_EPOCHS, ge=1)
    batch_size: int = Field(default=config.AE_BATCH_SIZE, ge=1)
    momentum: float = Field(default=0.9, ge=0, lt=1)


@dataclass
class AEModel:
    kind: str
    length: int
    network: Sequential
    multiple: int = 1                   # input is edge-padded to a multiple of this
    mean: float = 0.0
    std: float = 1.0
    trained: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def padded_length(self) -> int:
        return -(-self.length // self.multiple) * self.multiple

    def _check(self, profiles: np.ndarray) -> np.ndarray:
        profiles = np.asarray(profiles, dtype=np.float64)
        if profiles.ndim == 1:
            profiles = profiles[None]
        if profiles.ndim != 2 or profiles.shape[1] != self.length:
            raise ShapeError(f"profiles must have length {self.length}, got shape {profiles.shape}")
        return profiles

    def prepare(self, profiles: np.ndarray) -> np.ndarray:
        """Normalized, padded network input (N, 1, padded_length)."""
        z = (self._check(profiles) - self.mean) / self.std
        z = np.pad(z, ((0, 0), (0, self.padded_length - self.length)), mode="edge")
        return z[:, None, :]

    def reconstruct(self, profiles: np.ndarray) -> np.ndarray:
        out = self.network.forward(self.prepare(profiles))[:, 0, :self.length]
        return out * self.std + self.mean

    def score(self, profiles: np.ndarray) -> np.ndarray:
        """Per-profile mean squared reconstruction error in input units."""
        profiles = self._check(profiles)
        return np.mean((self.reconstruct(profiles) - profiles) ** 2, axis=1)


def build_conv_ae(length: int, channels: int = config.AE_CHANNELS, seed: int = 0) -> AEModel:
    rng = np.random.default_rng(seed)
    network = Sequential([
        Conv1D(1, channels, kernel=5, pad=2, rng=rng),
        ReLU(),
        MaxPool1D(),
        Conv1D(channels, 1, kernel=5, pad=2, rng=rng),
        MaxPool1D(),
        Upsample1D(),
        Conv1D(1, channels, kernel=5, pad=2, rng=rng),
        ReLU(),
        Upsample1D(),
        Conv1D(channels, 1, kernel=5, pad=2, rng=rng),
    ])
    return AEModel("conv", length, network, multiple=4, metadata={"channels": channels, "init_seed": seed})


def build_lstm_ae(length: int, hidden: int = config.AE_LSTM_HIDDEN, seed: int = 0) -> AEModel:
    rng = np.random.default_rng(seed)
    network = Sequential([
        LSTM(1, hidden, return_sequences=False, rng=rng),
        RepeatVector(length),
        LSTM(hidden, hidden, return_sequences=True, rng=rng),
        Conv1D(hidden, 1, kernel=1, pad=0, rng=rng),
    ])
    return AEModel("lstm", length, network, multiple=1, metadata={"hidden": hidden, "init_seed": seed})


# Autoencoder factory
AE_REGISTRY: Dict[str, Callable[..., AEModel]] = {
    "conv": build_conv_ae,
    "lstm": build_lstm_ae,
}


def create_autoencoder(kind: str = config.AE_KIND, length: int = 0, seed: int = 0, **overrides) -> AEModel:
    if kind not in AE_REGISTRY:
        raise ValueError(f"Unknown autoencoder: {kind}. Available: {list(AE_REGISTRY.keys())}")
    if length < 1:
        raise ShapeError(f"profile length must be >= 1, got {length}")
    return AE_REGISTRY[kind](length, seed=seed, **overrides)


def train_ae(model: AEModel, profiles: np.ndarray,
             cfg: AETrainConfig = AETrainConfig()) -> Tuple[AEModel, TrainHistory]:
    """Fit normalization and weights on baseline profiles only (no labels)."""
    profiles = model._check(profiles)
    model.mean = float(profiles.mean())
    std = float(profiles.std())
    model.std = std if std > 1e-12 else 1.0
    x = model.prepare(profiles)
    history = fit(model.network, "mse", x, x, cfg)
    model.trained = True
    model.metadata.update({
        "train_config": cfg.model_dump(),
        "train_profiles": int(profiles.shape[0]),
        "final_loss": history.final_loss,
    })
    return model, history


def save_ae(path: Union[str, Path], model: AEModel, provenance: Optional[Dict[str, Any]] = None) -> Path:
    return save_model(path, model.network, MODEL_KIND, provenance=provenance, extra={
        "ae_kind": model.kind, "length": model.length, "multiple": model.multiple,
        "mean": model.mean, "std": model.std, "trained": model.trained, **model.metadata,
    })


def load_ae(path: Union[str, Path]) -> AEModel:
    network, header = load_model(path, kind=MODEL_KIND)
    extra = dict(header.get("extra", {}))
    try:
        model = AEModel(kind=extra.pop("ae_kind"), length=extra.pop("length"), network=network,
                        multiple=extra.pop("multiple"), mean=extra.pop("mean"), std=extra.pop("std"),
                        trained=extra.pop("trained"))
    except KeyError as e:
        raise ManifestError(f"{path}: model header lacks {e}")
    model.metadata = extra
    return model
