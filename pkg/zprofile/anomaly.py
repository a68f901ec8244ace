"""
Reconstruction-error anomaly detection over z-profile grids.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.metrics import roc_auc_score

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import DegenerateDataError, ShapeError
from recon.volume import Volume
from xray.image_io import write_gray8, write_raw
from zprofile.autoencoder import AEModel
from zprofile.profiles import extract_zprofiles

logger = logging.getLogger(__name__)


@dataclass
class AnomalyMap:
    scores: np.ndarray          # (gy, gx) MSE ≥ 0
    tau: float
    window: int
    stride: int

    @property
    def flags(self) -> np.ndarray:
        return self.scores >= self.tau


def anomaly_score(model: AEModel, profile: np.ndarray) -> float:
    profile = np.asarray(profile, dtype=np.float64)
    if profile.ndim != 1:
        raise ShapeError(f"expected one profile, got shape {profile.shape}")
    return float(model.score(profile)[0])


def calibrate_threshold(model: AEModel, profiles: np.ndarray,
                        percentile: float = config.AE_PERCENTILE) -> float:
    """tau = `percentile`-th percentile of the baseline scores."""
    return float(np.percentile(model.score(profiles), percentile))


def anomaly_map(model: AEModel, volume: Volume, window: int = config.ZPROFILE_WINDOW,
                stride: Optional[int] = None, tau: float = 0.0) -> AnomalyMap:
    grid = extract_zprofiles(volume, window, stride)
    scores = model.score(grid.flat()).reshape(grid.shape)
    amap = AnomalyMap(scores=scores, tau=tau, window=grid.window, stride=grid.stride)
    logger.info(f"异常图: {scores.shape[0]}×{scores.shape[1]} 网格, {int(amap.flags.sum())} 个位置超过阈值 {tau:.4g}")
    return amap


def grid_truth(truth: np.ndarray, window: int, stride: Optional[int] = None) -> np.ndarray:
    """A grid position counts as damaged when ≥ half of its window lies in the truth region."""
    stride = window if stride is None else stride
    win = sliding_window_view(np.asarray(truth, dtype=np.float64), (window, window))[::stride, ::stride]
    return win.mean(axis=(-2, -1)) >= 0.5


def detection_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """Area under the ROC curve of scores against binary truth."""
    scores, truth = np.ravel(scores), np.ravel(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ShapeError(f"{scores.size} scores vs {truth.size} labels")
    if truth.all() or not truth.any():
        raise DegenerateDataError("AUC needs both damaged and undamaged positions")
    return float(roc_auc_score(truth, scores))


def write_anomaly_map(path: Union[str, Path], amap: AnomalyMap) -> Tuple[Path, Path]:
    """float32 raw + sidecar, and an 8-bit PNG preview next to it."""
    raw, side = write_raw(path, amap.scores, {"tau": amap.tau, "window": amap.window, "stride": amap.stride})
    hi = float(amap.scores.max()) if amap.scores.size else 1.0
    write_gray8(Path(path).with_suffix(".png"), amap.scores, 0.0, hi)
    return raw, side
