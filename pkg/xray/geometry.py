"""
Projection geometry.

Frame: the source sits at (0, 0, −SOD), the beam runs along +z, the
detector plane is z = SDD − SOD and its rows run along y. Pixel (row i,
column j) has its center at ((j − (W−1)/2)·pitch, (i − (H−1)/2)·pitch).
The specimen turns about the vertical (y) axis through its centroid.
"""
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config


class ProjectionGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sod: float = Field(default=config.SOD_MM, gt=0)
    sdd: float = Field(default=config.SDD_MM, gt=0)
    pitch: float = Field(default=config.PIXEL_PITCH_MM, gt=0)
    width: int = Field(default=config.DETECTOR_SHAPE[1], ge=1)
    height: int = Field(default=config.DETECTOR_SHAPE[0], ge=1)
    angle_deg: float = 0.0
    beam: Literal["cone", "parallel"] = "cone"
    focal_spot_mm: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _distances(self):
        if not self.sod < self.sdd:
            raise ValueError(f"need 0 < SOD < SDD, got SOD={self.sod}, SDD={self.sdd}")
        return self

    @property
    def magnification(self) -> float:
        return self.sdd / self.sod

    @property
    def iso_pitch(self) -> float:
        """Detector pixel size projected back to the rotation axis."""
        return self.pitch / self.magnification

    @property
    def source(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.sod])

    @property
    def detector_center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.sdd - self.sod])

    @property
    def detector_axes(self) -> Tuple[np.ndarray, np.ndarray]:
        """(column direction, row direction) unit vectors."""
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def with_angle(self, angle_deg: float) -> "ProjectionGeometry":
        return self.model_copy(update={"angle_deg": float(angle_deg)})

    def pixel_coords(self, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Detector-plane (u, v) in mm of pixel centers."""
        u = (np.asarray(cols, dtype=np.float64) - (self.width - 1) / 2.0) * self.pitch
        v = (np.asarray(rows, dtype=np.float64) - (self.height - 1) / 2.0) * self.pitch
        return u, v

    def rays(self, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Ray origins and unit directions for the given pixel index arrays.

        Cone beam: from the source to each pixel center. Parallel beam: along
        +z through the pixel center scaled back to the isocenter.
        """
        u, v = self.pixel_coords(rows, cols)
        n = u.size
        if self.beam == "parallel":
            m = self.magnification
            origins = np.stack([u.ravel() / m, v.ravel() / m, np.full(n, -self.sod)], axis=1)
            directions = np.tile([0.0, 0.0, 1.0], (n, 1))
            return origins, directions
        targets = np.stack([u.ravel(), v.ravel(), np.full(n, self.sdd - self.sod)], axis=1)
        directions = targets - self.source
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return np.tile(self.source, (n, 1)), directions

    def project(self, points: np.ndarray) -> np.ndarray:
        """Fractional (col, row) detector indices of world points (N, 3)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.beam == "parallel":
            scale = np.full(points.shape[0], self.magnification)
        else:
            scale = self.sdd / (points[:, 2] + self.sod)
        col = points[:, 0] * scale / self.pitch + (self.width - 1) / 2.0
        row = points[:, 1] * scale / self.pitch + (self.height - 1) / 2.0
        return np.stack([col, row], axis=1)

    def pixel_window(self, points: np.ndarray, pad: int = 1) -> Optional[Tuple[slice, slice]]:
        """(row slice, col slice) covering the projection of `points`, or None if off-detector."""
        cr = self.project(points)
        c0 = int(np.floor(cr[:, 0].min())) - pad
        c1 = int(np.ceil(cr[:, 0].max())) + pad + 1
        r0 = int(np.floor(cr[:, 1].min())) - pad
        r1 = int(np.ceil(cr[:, 1].max())) + pad + 1
        c0, r0 = max(c0, 0), max(r0, 0)
        c1, r1 = min(c1, self.width), min(r1, self.height)
        if c0 >= c1 or r0 >= r1:
            return None
        return slice(r0, r1), slice(c0, c1)


class AcquisitionConfig(BaseModel):
    """A rotation series: `count` angles evenly spaced over `range_deg`."""
    model_config = ConfigDict(frozen=True)

    count: int = Field(ge=1)
    range_deg: float = Field(default=180.0, gt=0)
    start_deg: float = 0.0
    geometry: ProjectionGeometry = Field(default_factory=ProjectionGeometry)

    def angles(self) -> List[float]:
        step = self.range_deg / self.count
        return [self.start_deg + k * step for k in range(self.count)]


def quasi_parallel_geometry(width: int, height: int, iso_pitch: float,
                            sdd: float = config.CT_SDD_MM, sod: float = config.CT_SOD_MM) -> ProjectionGeometry:
    """Large-SDD cone geometry for reconstruction (detector pitch scaled to keep `iso_pitch`)."""
    return ProjectionGeometry(sod=sod, sdd=sdd, pitch=iso_pitch * sdd / sod,
                              width=width, height=height)
