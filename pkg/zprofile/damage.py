"""
Synthetic damaged layer volumes (test oracle for the z-profile branch).

Inside the damage region the layer structure is stretched along z by a
piecewise-linear remap of the stack coordinate u ∈ [0, T]:

    knots [0, a, b, T]  →  [0, a·c, a·c + s·(b − a), T],   c = (T − s·(b − a)) / (T − (b − a))

so the band [a, b] grows by the stretch s and the rest of the stack is
compressed to keep the total thickness T.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, ShapeError
from recon.volume import Volume
from scene.specimen import SpecimenSpec

logger = logging.getLogger(__name__)

SUBSAMPLES = 4


class DamageRegion(BaseModel):
    """Half-open voxel box [x0, x1) × [y0, y1) in the x–y plane."""
    model_config = ConfigDict(frozen=True)

    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    x1: int
    y1: int

    @model_validator(mode="after")
    def _nonempty(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"empty damage region {self.x0}:{self.x1} × {self.y0}:{self.y1}")
        return self

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def stretch_knots(total: float, stretch: float,
                  band: Optional[Tuple[float, float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(source, target) knot positions of the remap."""
    a, b = band if band is not None else (total / 3.0, 2.0 * total / 3.0)
    if not 0.0 <= a < b <= total:
        raise ConfigError(f"band ({a}, {b}) must lie inside [0, {total}]")
    grown = stretch * (b - a)
    if grown >= total:
        raise ConfigError(f"stretch {stretch} of band {b - a:.4g} exceeds stack thickness {total:.4g}")
    c = (total - grown) / (total - (b - a))
    return np.array([0.0, a, b, total]), np.array([0.0, a * c, a * c + grown, total])


def layer_density(spec: SpecimenSpec, u: np.ndarray) -> np.ndarray:
    """μ at stack coordinate u (0 at the bottom face)."""
    edges = np.concatenate([[0.0], np.cumsum([layer.thickness for layer in spec.layers])])
    mu = np.array([layer.material.mu for layer in spec.layers])
    idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(mu) - 1)
    return mu[idx]


def _column(spec: SpecimenSpec, nz: int, remap: Optional[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    total = spec.plate_size[2]
    voxel = total / nz
    offsets = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES
    u = (np.arange(nz)[:, None] + offsets[None, :]) * voxel            # (nz, SUBSAMPLES)
    if remap is not None:
        src, dst = remap
        u = np.interp(u, dst, src)
    return layer_density(spec, u).mean(axis=1)


def synth_damaged_volume(spec: SpecimenSpec, region: DamageRegion, stretch: float = 1.2,
                         seed: int = 0, nx: int = 48, ny: int = 48, nz: int = 64,
                         noise: float = config.DAMAGE_NOISE,
                         band: Optional[Tuple[float, float]] = None) -> Tuple[Volume, np.ndarray]:
    """Layered volume with a stretched region, plus its (ny, nx) truth map.

    Raises:
        ConfigError: stretch ≤ 0, non-layered spec, or a band the stretch cannot fit.
        ShapeError: region outside the x–y extent.
    """
    if spec.kind != "fml_stack":
        raise ConfigError(f"damaged volumes need an fml_stack spec, got {spec.kind}")
    if stretch <= 0:
        raise ConfigError(f"stretch must be > 0, got {stretch}")
    if region.x1 > nx or region.y1 > ny:
        raise ShapeError(f"damage region {region.model_dump()} outside {nx}×{ny}")

    total = spec.plate_size[2]
    baseline = _column(spec, nz, None)
    values = np.broadcast_to(baseline[:, None, None], (nz, ny, nx)).copy()
    if stretch != 1.0:
        damaged = _column(spec, nz, stretch_knots(total, stretch, band))
        values[:, region.y0:region.y1, region.x0:region.x1] = damaged[:, None, None]
    if noise > 0:
        values += np.random.default_rng(seed).normal(0.0, noise, size=values.shape)

    truth = np.zeros((ny, nx), dtype=bool)
    truth[region.y0:region.y1, region.x0:region.x1] = True
    logger.info(f"合成损伤体: {nx}×{ny}×{nz}, 拉伸 {stretch}, 区域面积 {region.area}")
    volume = Volume(values=values, voxel=total / nz, metadata={
        "spec_hash": spec.content_hash(),
        "region": region.model_dump(),
        "stretch": stretch,
        "band": list(band) if band is not None else None,
        "noise": noise,
        "seed": seed,
    })
    return volume, truth
