"""
Score maps → binary masks and point sets.
"""
from typing import Tuple, Union

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.inference import FeatureMap
from errors import ConfigError


def mask_to_points(mask: np.ndarray) -> np.ndarray:
    """(N, 2) float (x, y) pixel coordinates of nonzero pixels, row-major order."""
    rows, cols = np.nonzero(mask)
    return np.stack([cols, rows], axis=1).astype(np.float64)


def threshold_map(fmap: Union[FeatureMap, np.ndarray],
                  tau: float = config.THRESHOLD_TAU) -> Tuple[np.ndarray, np.ndarray]:
    """Pixels with score ≥ tau, as a boolean mask and as (x, y) points."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    scores = fmap.scores if isinstance(fmap, FeatureMap) else np.asarray(fmap)
    mask = scores >= tau
    return mask, mask_to_points(mask)
