"""
1D CNN damage classifier for z-profiles (negative training on labelled
damaged and undamaged profiles). Same layer recipe as the pixel classifier:

    conv5 (A) relu pool · conv5 (B) relu pool · dense (B·L/4 → 2) · softmax

Class 1 is "damaged".
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import Field

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, DegenerateDataError, ManifestError, ShapeError
from nn.layers import Conv1D, Dense, Flatten, MaxPool1D, ReLU
from nn.network import Sequential, SoftmaxCrossEntropy, softmax
from nn.serialization import load_model, save_model
from nn.trainer import SGDConfig, TrainHistory, evaluate, fit

logger = logging.getLogger(__name__)

MODEL_KIND = "zprofile_cnn"
UNDAMAGED, DAMAGED = 0, 1


class ZCnnTrainConfig(SGDConfig):
    learning_rate: float = Field(default=config.CNN_LEARNING_RATE, ge=0)
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=config.CNN_BATCH_SIZE, ge=1)
    holdout: float = Field(default=0.2, ge=0, lt=1)


@dataclass
class ZCnnModel:
    length: int
    filter_a: int
    filter_b: int
    network: Sequential
    mean: float = 0.0
    std: float = 1.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def padded_length(self) -> int:
        return -(-self.length // 4) * 4

    def prepare(self, profiles: np.ndarray) -> np.ndarray:
        profiles = np.asarray(profiles, dtype=np.float64)
        if profiles.ndim == 1:
            profiles = profiles[None]
        if profiles.ndim != 2 or profiles.shape[1] != self.length:
            raise ShapeError(f"profiles must have length {self.length}, got shape {profiles.shape}")
        z = (profiles - self.mean) / self.std
        return np.pad(z, ((0, 0), (0, self.padded_length - self.length)), mode="edge")[:, None, :]

    def predict_proba(self, profiles: np.ndarray) -> np.ndarray:
        return softmax(self.network.forward(self.prepare(profiles)))


def build_zcnn(length: int, filter_a: int = config.ZCNN_FILTERS[0],
               filter_b: int = config.ZCNN_FILTERS[1], seed: int = 0) -> ZCnnModel:
    if length < 1 or filter_a < 1 or filter_b < 1:
        raise ConfigError(f"length and filter counts must be >= 1, got {length}, {filter_a}, {filter_b}")
    rng = np.random.default_rng(seed)
    padded = -(-length // 4) * 4
    network = Sequential([
        Conv1D(1, filter_a, kernel=5, pad=2, rng=rng),
        ReLU(),
        MaxPool1D(),
        Conv1D(filter_a, filter_b, kernel=5, pad=2, rng=rng),
        ReLU(),
        MaxPool1D(),
        Flatten(),
        Dense(filter_b * (padded // 4), 2, rng=rng),
    ])
    return ZCnnModel(length, filter_a, filter_b, network, metadata={"init_seed": seed})


def classify_profile(model: ZCnnModel, profile: np.ndarray) -> np.ndarray:
    """(undamaged, damaged) probabilities of one profile."""
    return model.predict_proba(np.asarray(profile, dtype=np.float64)[None])[0]


def train_zcnn(model: ZCnnModel, profiles: np.ndarray, labels: np.ndarray,
               cfg: ZCnnTrainConfig = ZCnnTrainConfig()) -> Tuple[ZCnnModel, TrainHistory]:
    """Train on a seeded split; the held-out accuracy is stored in model.metadata.

    Raises:
        DegenerateDataError: only one class present, or the split leaves the
            training set empty or with a single class.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != profiles.shape[0]:
        raise ShapeError(f"{profiles.shape[0]} profiles vs {labels.shape[0]} labels")
    if np.unique(labels).size < 2:
        raise DegenerateDataError("z-profile classifier needs damaged and undamaged examples")

    order = np.random.default_rng(cfg.seed).permutation(labels.size)
    n_hold = int(round(cfg.holdout * labels.size))
    hold, train = order[:n_hold], order[n_hold:]
    if train.size == 0:
        raise DegenerateDataError(f"holdout {cfg.holdout} leaves no training profiles out of {labels.size}")
    if np.unique(labels[train]).size < 2:
        raise DegenerateDataError(f"holdout split (seed {cfg.seed}) leaves a single class in the training set")
    model.mean = float(profiles[train].mean())
    std = float(profiles[train].std())
    model.std = std if std > 1e-12 else 1.0

    x = model.prepare(profiles)
    history = fit(model.network, "cross_entropy", x[train], labels[train], cfg)
    held_out = None
    if n_hold:
        _, held_out = evaluate(model.network, SoftmaxCrossEntropy(), x[hold], labels[hold], classify=True)
    model.metadata.update({
        "train_config": cfg.model_dump(),
        "train_accuracy": history.final_accuracy,
        "held_out_accuracy": held_out,
        "held_out_count": int(n_hold),
    })
    logger.info(f"z-CNN 训练完成: 训练准确率 {history.final_accuracy:.3f}, 留出准确率 {held_out}")
    return model, history


def save_zcnn(path: Union[str, Path], model: ZCnnModel, provenance: Optional[Dict[str, Any]] = None) -> Path:
    return save_model(path, model.network, MODEL_KIND, provenance=provenance, extra={
        "length": model.length, "filter_a": model.filter_a, "filter_b": model.filter_b,
        "mean": model.mean, "std": model.std, **model.metadata,
    })


def load_zcnn(path: Union[str, Path]) -> ZCnnModel:
    network, header = load_model(path, kind=MODEL_KIND)
    extra = dict(header.get("extra", {}))
    try:
        model = ZCnnModel(extra.pop("length"), extra.pop("filter_a"), extra.pop("filter_b"), network,
                          mean=extra.pop("mean"), std=extra.pop("std"))
    except KeyError as e:
        raise ManifestError(f"{path}: model header lacks {e}")
    model.metadata = extra
    return model
