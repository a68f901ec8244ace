"""
Sinograms: per-row line integrals p(θ, s) = −ln(I/I₀) of a rotation series.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ShapeError
from xray.image_io import ProjectionImage


@dataclass
class Sinogram:
    """Line integrals of a rotation series, grouped by detector row."""
    angles_deg: np.ndarray              # (N,) ascending
    values: np.ndarray                  # (rows, N, width)
    spacing: float                      # mm between detector samples at the rotation axis
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_angles(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    def row(self, index: int) -> np.ndarray:
        return self.values[index]


def _axis_spacing(img: ProjectionImage) -> float:
    geo = img.metadata.get("geometry") or {}
    if "sod" in geo and "sdd" in geo:
        return img.pitch * geo["sod"] / geo["sdd"]
    return img.pitch


def to_sinogram(series: Sequence[ProjectionImage], epsilon: float = config.LOG_EPSILON) -> Sinogram:
    """Stack a rotation series into per-row sinograms, sorted by angle.

    Raises:
        ShapeError: empty series or images of differing size.
    """
    if not series:
        raise ShapeError("empty projection series")
    shape = series[0].values.shape
    for k, img in enumerate(series):
        if img.values.shape != shape:
            raise ShapeError(f"projection {k} has shape {img.values.shape}, expected {shape}")

    order = np.argsort([img.angle_deg for img in series], kind="stable")
    ordered: List[ProjectionImage] = [series[k] for k in order]
    stack = np.stack([img.values for img in ordered], axis=1)          # (rows, N, W)
    values = -np.log(np.maximum(stack, epsilon))
    return Sinogram(
        angles_deg=np.array([img.angle_deg for img in ordered], dtype=np.float64),
        values=values,
        spacing=_axis_spacing(ordered[0]),
        metadata={
            "epsilon": epsilon,
            "geometry": ordered[0].metadata.get("geometry"),
            "spec_id": ordered[0].metadata.get("spec_id", ""),
        },
    )
