"""
Supervised SGD training of the pixel classifier, and its model files.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import Field, model_validator

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.pixel_cnn import CnnModel, PORE_CLASS
from classifier.segments import Segment, to_arrays
from errors import DegenerateDataError, ManifestError
from nn.serialization import load_model, save_model
from nn.trainer import SGDConfig, TrainHistory, fit

logger = logging.getLogger(__name__)

MODEL_KIND = "pixel_cnn"


class TrainConfig(SGDConfig):
    learning_rate: float = Field(default=config.CNN_LEARNING_RATE, ge=0)
    epochs: int = Field(default=config.CNN_EPOCHS, ge=1)
    batch_size: int = Field(default=config.CNN_BATCH_SIZE, ge=1)
    mix: Tuple[float, float] = config.CNN_MIX

    @model_validator(mode="after")
    def _mix(self):
        if abs(sum(self.mix) - 1.0) > 1e-9 or min(self.mix) < 0:
            raise ValueError(f"mix fractions must be >= 0 and sum to 1, got {self.mix}")
        return self


def train_sgd(model: CnnModel, segments: Sequence[Segment],
              cfg: TrainConfig = TrainConfig()) -> Tuple[CnnModel, TrainHistory]:
    """Minimize mean cross-entropy over `segments`; updates `model` in place.

    Raises:
        DegenerateDataError: fewer than 2 segments or only one class present.
    """
    x, y = to_arrays(segments)
    if y.size < 2 or np.unique(y).size < 2:
        raise DegenerateDataError(
            f"training needs both classes and >= 2 segments, got {y.size} segments "
            f"with classes {sorted(set(y.tolist()))}")
    history = fit(model.network, "cross_entropy", x[:, None, :, :], y, cfg)
    model.metadata.update({
        "train_config": cfg.model_dump(),
        "train_segments": int(y.size),
        "train_pore_fraction": float(np.mean(y == PORE_CLASS)),
        "final_loss": history.final_loss,
        "train_accuracy": history.final_accuracy,
    })
    return model, history


def save_cnn(path: Union[str, Path], model: CnnModel,
             provenance: Optional[Dict[str, Any]] = None) -> Path:
    return save_model(path, model.network, MODEL_KIND, provenance=provenance, extra={
        "segment_size": model.segment_size, "filter_a": model.filter_a,
        "filter_b": model.filter_b, **model.metadata,
    })


def load_cnn(path: Union[str, Path]) -> CnnModel:
    network, header = load_model(path, kind=MODEL_KIND)
    extra = dict(header.get("extra", {}))
    try:
        s, a, b = extra.pop("segment_size"), extra.pop("filter_a"), extra.pop("filter_b")
    except KeyError as e:
        raise ManifestError(f"{path}: model header lacks {e}")
    return CnnModel(s, a, b, network, metadata=extra)
