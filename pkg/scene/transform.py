"""
Affine transforms for specimen geometry.

A Transform applies scale, then rotation, then translation. Rotation angles
are degrees about the fixed x, y, z axes in that order, which is how
`rotate([x, y, z])` behaves in OpenSCAD templates.
"""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.spatial.transform import Rotation

Vec3 = Tuple[float, float, float]


class Transform(BaseModel):
    """Scale → rotate → translate, all in mm / degrees."""
    model_config = ConfigDict(frozen=True)

    translation: Vec3 = (0.0, 0.0, 0.0)
    rotation: Vec3 = (0.0, 0.0, 0.0)
    scale: Vec3 = Field(default=(1.0, 1.0, 1.0))

    @field_validator("scale")
    @classmethod
    def _positive_scale(cls, v: Vec3) -> Vec3:
        if any(s <= 0 for s in v):
            raise ValueError(f"scale components must be > 0, got {v}")
        return v

    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_euler("xyz", self.rotation, degrees=True).as_matrix()

    def matrix(self) -> np.ndarray:
        """4×4 homogeneous matrix T·R·S."""
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix() @ np.diag(self.scale)
        m[:3, 3] = self.translation
        return m

    def inverse_matrix(self) -> np.ndarray:
        return invert(self.matrix())


def translation(v: Vec3) -> Transform:
    return Transform(translation=tuple(v))


def rotation(angles: Vec3) -> Transform:
    return Transform(rotation=tuple(angles))


def scaling(s: Vec3) -> Transform:
    return Transform(scale=tuple(s))


def compose(*matrices: np.ndarray) -> np.ndarray:
    """compose(A, B, C) = A·B·C (C applied first)."""
    out = np.eye(4)
    for m in matrices:
        out = out @ m
    return out


def invert(matrix: np.ndarray) -> np.ndarray:
    linear = matrix[:3, :3]
    inv = np.eye(4)
    inv[:3, :3] = np.linalg.inv(linear)
    inv[:3, 3] = -inv[:3, :3] @ matrix[:3, 3]
    return inv


def apply(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a homogeneous matrix to an (N, 3) point array."""
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:3, :3].T + matrix[:3, 3]


def rotation_y(angle_deg: float) -> np.ndarray:
    """Turntable rotation about the vertical (detector y) axis.

    x' = x·cosθ + z·sinθ, z' = −x·sinθ + z·cosθ.
    """
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle_deg: float) -> np.ndarray:
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
