"""
Pixel-level detection rates against simulated ground truth.
"""
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError
from scene.mask import DEFECT, GroundTruthMask


class PixelRates(BaseModel):
    tp: int
    fn: int
    fp: int
    tn: int
    tp_rate: Optional[float]            # None when the truth has no defect pixels
    fn_rate: Optional[float]
    fp_rate: Optional[float]            # None when the truth has no background pixels
    precision: Optional[float]          # None when nothing is predicted


def _as_bool(mask: Union[GroundTruthMask, np.ndarray]) -> np.ndarray:
    if isinstance(mask, GroundTruthMask):
        return mask.defect
    mask = np.asarray(mask)
    return mask == DEFECT if mask.dtype != bool else mask


def evaluate_pixels(pred: Union[GroundTruthMask, np.ndarray],
                    truth: Union[GroundTruthMask, np.ndarray]) -> PixelRates:
    p, t = _as_bool(pred), _as_bool(truth)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} does not match truth {t.shape}")
    tp = int((p & t).sum())
    fn = int((~p & t).sum())
    fp = int((p & ~t).sum())
    tn = int((~p & ~t).sum())
    tp_rate = tp / (tp + fn) if tp + fn else None
    return PixelRates(
        tp=tp, fn=fn, fp=fp, tn=tn,
        tp_rate=tp_rate,
        fn_rate=None if tp_rate is None else 1.0 - tp_rate,
        fp_rate=fp / (fp + tn) if fp + tn else None,
        precision=tp / (tp + fp) if tp + fp else None,
    )
