"""
Detector effects applied after ray tracing: noise, focal blur, quantization.
"""
import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from xray.image_io import ProjectionImage

logger = logging.getLogger(__name__)


class NoiseModel(BaseModel):
    """Gaussian detector noise.

    gaussian_relative:   I' = I·(1 + n),  n ~ N(0, σ²)
    gaussian_full_scale: I' = I + n,      n ~ N(0, σ²)  (σ relative to I₀ = 1)
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian_relative", "gaussian_full_scale"] = "gaussian_relative"
    sigma_rel: float = Field(default=config.NOISE_SIGMA_REL, ge=0)
    seed: int = 0


class QuantizationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    bits: Literal[12, 16] = config.QUANT_BITS

    @property
    def max_count(self) -> int:
        return (1 << self.bits) - 1


def _row_normals(seed: int, stream: int, rows: int, cols: int) -> np.ndarray:
    """N(0,1) field with one independent stream per detector row."""
    out = np.empty((rows, cols))
    for r in range(rows):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, r)))
        out[r] = rng.standard_normal(cols)
    return out


def add_noise(img: ProjectionImage, model: NoiseModel, stream: int = 0) -> ProjectionImage:
    """Superimpose seeded Gaussian noise, clamped to >= 0.

    `stream` separates images of one series that share the model seed.
    """
    if model.sigma_rel == 0:
        return img.with_values(img.values.copy(), noise=model.model_dump())
    n = _row_normals(model.seed, stream, img.height, img.width) * model.sigma_rel
    if model.kind == "gaussian_relative":
        noisy = img.values * (1.0 + n)
    else:
        noisy = img.values + n
    return img.with_values(np.maximum(noisy, 0.0), noise={**model.model_dump(), "stream": stream})


def apply_focal_blur(img: ProjectionImage, focal_spot_mm: float, magnification: float) -> ProjectionImage:
    """Approximate a finite focal spot by a Gaussian blur of the geometric unsharpness.

    FWHM on the detector = focal·(M − 1); σ = FWHM / 2.355 in pixels.
    """
    if focal_spot_mm <= 0 or magnification <= 1:
        return img
    sigma_px = focal_spot_mm * (magnification - 1.0) / img.pitch / 2.355
    blurred = ndimage.gaussian_filter(img.values, sigma=sigma_px, mode="nearest")
    return img.with_values(blurred, focal_blur_sigma_px=sigma_px)


def quantize(img: ProjectionImage, spec: QuantizationSpec) -> np.ndarray:
    """Integer counts floor(clamp(I, 0, 1)·(2^bits − 1) + 0.5)."""
    scaled = np.clip(img.values, 0.0, 1.0) * spec.max_count
    return np.floor(scaled + 0.5).astype(np.uint16)


def dequantize(counts: np.ndarray, bits: int, pitch: float = 1.0,
               metadata: Optional[dict] = None) -> ProjectionImage:
    spec = QuantizationSpec(bits=bits)
    values = np.asarray(counts, dtype=np.float64) / spec.max_count
    return ProjectionImage(values=values, pitch=pitch, metadata={**(metadata or {}), "bits": bits})
