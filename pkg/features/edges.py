"""
Canny edge detection (Gaussian smoothing, Sobel gradients, non-maximum
suppression, hysteresis) as an aid for marking layer and pore boundaries.
"""
import numpy as np
from skimage import feature

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ConfigError


def canny(image: np.ndarray, sigma: float = 1.0, low: float = 0.1, high: float = 0.2) -> np.ndarray:
    """Boolean edge mask; thresholds apply to the smoothed gradient magnitude."""
    if not 0.0 <= low <= high:
        raise ConfigError(f"need 0 <= low <= high, got low={low}, high={high}")
    values = np.asarray(image, dtype=np.float64)
    return feature.canny(values, sigma=sigma, low_threshold=low, high_threshold=high)
