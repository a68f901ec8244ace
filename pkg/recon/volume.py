"""
Reconstructed attenuation volumes and their on-disk format.

Layout: values[z, y, x] (x fastest), raw float32 little-endian with a JSON
sidecar holding nx, ny, nz, voxel size and provenance.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Tuple, Union

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import ShapeError
from xray.image_io import read_raw, sidecar_path, write_png16, write_raw

PathLike = Union[str, Path]


@dataclass
class Volume:
    values: np.ndarray                  # (nz, ny, nx), 1/mm
    voxel: float                        # mm
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ShapeError(f"volume needs three positive dimensions, got {self.values.shape}")

    @property
    def nz(self) -> int:
        return int(self.values.shape[0])

    @property
    def ny(self) -> int:
        return int(self.values.shape[1])

    @property
    def nx(self) -> int:
        return int(self.values.shape[2])

    def z_coords(self) -> np.ndarray:
        """Voxel-center z (mm), centered on the rotation axis."""
        return (np.arange(self.nz) - (self.nz - 1) / 2.0) * self.voxel

    def x_coords(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.voxel


def write_volume(path: PathLike, volume: Volume) -> Tuple[Path, Path]:
    meta = {"nx": volume.nx, "ny": volume.ny, "nz": volume.nz,
            "voxel_size": volume.voxel, "provenance": volume.metadata}
    return write_raw(path, volume.values, meta)


def read_volume(path: PathLike) -> Volume:
    values, meta = read_raw(path)
    return Volume(values=values, voxel=float(meta["voxel_size"]), metadata=meta.get("provenance", {}))


def slice_of(volume: Volume, axis: Literal["x", "y", "z"], index: int) -> np.ndarray:
    dim = {"z": 0, "y": 1, "x": 2}[axis]
    if not 0 <= index < volume.values.shape[dim]:
        raise ShapeError(f"slice {axis}={index} outside volume {volume.values.shape}")
    return np.take(volume.values, index, axis=dim)


def export_slice_png(path: PathLike, volume: Volume, axis: Literal["x", "y", "z"] = "y",
                     index: int = None) -> Path:
    """16-bit PNG of one slice, windowed to its own min/max (stored in a JSON sidecar)."""
    dim = {"z": 0, "y": 1, "x": 2}[axis]
    index = volume.values.shape[dim] // 2 if index is None else index
    plane = slice_of(volume, axis, index)
    lo, hi = float(plane.min()), float(plane.max())
    span = hi - lo if hi > lo else 1.0
    counts = np.floor((plane - lo) / span * 65535 + 0.5)
    path = write_png16(path, counts)
    sidecar_path(path).write_text(json.dumps({"axis": axis, "index": index, "min": lo, "max": hi},
                                             indent=2), encoding="utf-8")
    return path
