"""
Sliding-window classification: every pixel is scored by the CNN applied to
the segment centered on it. Borders use reflect padding of the image.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from classifier.pixel_cnn import CnnModel, PORE_CLASS
from classifier.segments import normalized
from errors import ShapeError
from xray.image_io import ProjectionImage

logger = logging.getLogger(__name__)

# patches per forward batch
_BATCH_PIXELS = 2048


@dataclass
class FeatureMap:
    scores: np.ndarray                  # (H, W) pore probability
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def height(self) -> int:
        return int(self.scores.shape[0])

    @property
    def width(self) -> int:
        return int(self.scores.shape[1])

    @property
    def classes(self) -> np.ndarray:
        """Argmax class per pixel (ties go to background)."""
        return (self.scores > 0.5).astype(np.uint8)


def _padded(values: np.ndarray, s: int) -> np.ndarray:
    half = s // 2
    return np.pad(values, ((half, s - 1 - half), (half, s - 1 - half)), mode="reflect")


def patch_at(image: Union[ProjectionImage, np.ndarray], x: int, y: int, segment_size: int) -> np.ndarray:
    """The segment the classifier sees for pixel (x, y)."""
    padded = _padded(normalized(image), segment_size)
    return padded[y:y + segment_size, x:x + segment_size].copy()


def sliding_window_classify(model: CnnModel, image: Union[ProjectionImage, np.ndarray],
                            threads: int = 1) -> FeatureMap:
    """Pore probability for every pixel of `image`.

    Raises:
        ShapeError: image smaller than the segment size in either dimension.
    """
    values = normalized(image)
    s = model.segment_size
    h, w = values.shape
    if h < s or w < s:
        raise ShapeError(f"image {values.shape} smaller than segment size {s}")

    windows = sliding_window_view(_padded(values, s), (s, s))       # (H, W, s, s)
    rows_per_batch = max(1, _BATCH_PIXELS // w)
    starts = list(range(0, h, rows_per_batch))

    def score_rows(r0: int) -> np.ndarray:
        block = windows[r0:r0 + rows_per_batch].reshape(-1, s, s)
        return model.predict_proba(block)[:, PORE_CLASS].reshape(-1, w)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(score_rows, starts))
    else:
        parts = [score_rows(r0) for r0 in starts]
    logger.info(f"滑窗分类完成: {h}×{w} 像素, 模型 [{model.arch}]")

    meta = {"model_arch": model.arch}
    if isinstance(image, ProjectionImage):
        meta["source"] = {k: image.metadata.get(k) for k in ("spec_id", "geometry", "noise")}
    return FeatureMap(scores=np.vstack(parts), metadata=meta)
