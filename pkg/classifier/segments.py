"""
Labelled training segments cut from a simulated image and its ground truth.

A segment of size s centered on pixel (x, y) covers rows y − s//2 … y − s//2 + s − 1
(and likewise columns), the same window the sliding-window classifier
evaluates for that pixel.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.pixel_cnn import BACKGROUND_CLASS, PORE_CLASS
from errors import ConfigError, SamplingError, ShapeError
from scene.mask import DEFECT, GroundTruthMask
from xray.image_io import ProjectionImage

logger = logging.getLogger(__name__)


@dataclass
class Segment:
    patch: np.ndarray           # (s, s), values in [0, 1]
    label: int                  # PORE_CLASS / BACKGROUND_CLASS
    image_id: str
    x: int
    y: int


def normalized(image: Union[ProjectionImage, np.ndarray]) -> np.ndarray:
    """Relative intensity clipped to [0, 1]."""
    values = image.values if isinstance(image, ProjectionImage) else np.asarray(image)
    return np.clip(values.astype(np.float64), 0.0, 1.0)


def to_arrays(segments: Sequence[Segment]) -> Tuple[np.ndarray, np.ndarray]:
    """(N, s, s) patches and (N,) labels."""
    if not segments:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64)
    return (np.stack([s.patch for s in segments]),
            np.array([s.label for s in segments], dtype=np.int64))


def extract_training_segments(image: Union[ProjectionImage, np.ndarray],
                              mask: Union[GroundTruthMask, np.ndarray],
                              count: int = config.CNN_SEGMENTS,
                              mix: Tuple[float, float] = config.CNN_MIX,
                              seed: int = 0,
                              segment_size: int = config.CNN_ARCH[0],
                              image_id: str = "") -> List[Segment]:
    """Sample `count` segments, round(count·mix[0]) pore-centered and the rest background.

    Centers are drawn without replacement among pixels whose full segment
    lies inside the image. Pore segments come first, each group in draw order.

    Raises:
        ShapeError: mask and image differ in size, or image smaller than a segment.
        SamplingError: not enough valid centers of a class.
    """
    values = normalized(image)
    labels = mask.values if isinstance(mask, GroundTruthMask) else np.asarray(mask)
    if labels.shape != values.shape:
        raise ShapeError(f"mask {labels.shape} does not match image {values.shape}")
    if abs(sum(mix) - 1.0) > 1e-9 or min(mix) < 0:
        raise ConfigError(f"class mix must be two non-negative fractions summing to 1, got {mix}")
    s = segment_size
    h, w = values.shape
    if h < s or w < s:
        raise ShapeError(f"image {values.shape} smaller than segment size {s}")

    half = s // 2
    valid = np.zeros_like(labels, dtype=bool)
    valid[half:h - s + half + 1, half:w - s + half + 1] = True
    pore_idx = np.flatnonzero(valid & (labels == DEFECT))
    bg_idx = np.flatnonzero(valid & (labels != DEFECT))

    n_pore = int(round(count * mix[0]))
    n_bg = count - n_pore
    if n_pore > pore_idx.size or n_bg > bg_idx.size:
        raise SamplingError(f"cannot draw {n_pore} pore + {n_bg} background segments",
                            available={"pore": int(pore_idx.size), "background": int(bg_idx.size)})

    rng = np.random.default_rng(seed)
    picks = [(PORE_CLASS, rng.choice(pore_idx, size=n_pore, replace=False)),
             (BACKGROUND_CLASS, rng.choice(bg_idx, size=n_bg, replace=False))]
    segments = []
    for label, flat in picks:
        for p in flat:
            y, x = divmod(int(p), w)
            patch = values[y - half:y - half + s, x - half:x - half + s].copy()
            segments.append(Segment(patch=patch, label=label, image_id=image_id, x=x, y=y))
    logger.info(f"抽取训练片段: {n_pore} 个气孔, {n_bg} 个背景 (可用 {pore_idx.size}/{bg_idx.size})")
    return segments
