"""
Mini-batch SGD trainer.

Training is single-threaded and deterministic: the epoch permutations come
from `SGDConfig.seed`, gradients of a batch are reduced in a fixed order,
and parameters are updated in layer order.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError
from nn.network import MeanSquaredError, Sequential, SoftmaxCrossEntropy, create_loss

logger = logging.getLogger(__name__)

Loss = Union[SoftmaxCrossEntropy, MeanSquaredError]

EVAL_BATCH = 256


class SGDConfig(BaseModel):
    learning_rate: float = Field(default=0.01, ge=0)
    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=16, ge=1)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    seed: int = 0


@dataclass
class TrainHistory:
    """Per-epoch records; epoch 0 is the state before the first update."""
    records: List[Dict[str, Any]] = field(default_factory=list)

    def append(self, epoch: int, loss: float, accuracy: Optional[float]):
        self.records.append({"epoch": epoch, "loss": loss, "train_accuracy": accuracy})

    @property
    def losses(self) -> List[float]:
        return [r["loss"] for r in self.records]

    @property
    def final_loss(self) -> float:
        return self.records[-1]["loss"]

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.records[-1]["train_accuracy"]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=["epoch", "loss", "train_accuracy"])

    def to_csv(self, path: Union[str, Path]) -> Path:
        self.to_frame().to_csv(path, index=False, float_format="%.9g")
        return Path(path)


def evaluate(network: Sequential, loss: Loss, x: np.ndarray, y: np.ndarray,
             classify: bool) -> Tuple[float, Optional[float]]:
    """Full-data loss (and accuracy for classifiers), evaluated in fixed batches."""
    total, correct = 0.0, 0
    n = x.shape[0]
    for s in range(0, n, EVAL_BATCH):
        out = network.forward(x[s:s + EVAL_BATCH])
        yb = y[s:s + EVAL_BATCH]
        total += loss.forward(out, yb) * out.shape[0]
        if classify:
            correct += int((out.argmax(axis=1) == yb).sum())
    return total / n, (correct / n if classify else None)


def fit(network: Sequential, loss: Union[str, Loss], x: np.ndarray, y: np.ndarray,
        cfg: SGDConfig) -> TrainHistory:
    """Minimize `loss` over (x, y) in place.

    Args:
        network: model to train (parameters are updated in place).
        loss: "cross_entropy" (y holds class indices) or "mse" (y holds targets).
        x, y: training inputs and targets, first axis indexes samples.
        cfg: optimizer settings.
    """
    loss = create_loss(loss) if isinstance(loss, str) else loss
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
    classify = isinstance(loss, SoftmaxCrossEntropy)
    rng = np.random.default_rng(cfg.seed)
    velocity = {name: np.zeros_like(p) for name, p in network.named_params()}

    history = TrainHistory()
    history.append(0, *evaluate(network, loss, x, y, classify))
    logger.info(f"开始训练: {x.shape[0]} 个样本, {cfg.epochs} 轮, 初始损失 {history.final_loss:.6f}")

    n = x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            out = network.forward(x[idx], training=True)
            loss.forward(out, y[idx])
            network.backward(loss.backward())
            for (name, param), (_, grad) in zip(network.named_params(), network.named_grads()):
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learning_rate * grad
                param += v
        history.append(epoch, *evaluate(network, loss, x, y, classify))
        logger.debug(f"epoch {epoch}/{cfg.epochs} loss={history.final_loss:.6f}")

    logger.info(f"训练完成: 最终损失 {history.final_loss:.6f}")
    return history
