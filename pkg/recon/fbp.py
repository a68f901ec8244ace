"""
Parallel-beam filtered back projection.

For detector row r the reconstruction plane is x–z. A voxel at (x, z)
projects at angle θ onto s = x·cosθ + z·sinθ (the specimen turns about
+y). Rows are independent and may be reconstructed in parallel.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import InsufficientCoverageError, ShapeError
from recon.filters import FilterSpec, ramp_filter
from recon.sinogram import Sinogram, to_sinogram
from recon.volume import Volume
from xray.image_io import ProjectionImage

logger = logging.getLogger(__name__)


class ReconGrid(BaseModel):
    """Square x–z output grid centered on the rotation axis."""
    model_config = ConfigDict(frozen=True)

    nx: int = Field(ge=1)
    nz: int = Field(ge=1)
    voxel: float = Field(gt=0)          # mm

    @classmethod
    def for_sinogram(cls, sino: Sinogram) -> "ReconGrid":
        return cls(nx=sino.width, nz=sino.width, voxel=sino.spacing)


def angular_span(angles_deg: np.ndarray) -> float:
    """Covered span: max − min plus one angular step."""
    angles = np.sort(np.asarray(angles_deg, dtype=np.float64))
    if angles.size < 2:
        return 0.0
    return float(angles[-1] - angles[0] + np.median(np.diff(angles)))


def fbp_slice(projections: np.ndarray, angles_deg: Sequence[float], grid: ReconGrid,
              spacing: float, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Reconstruct one (nz, nx) slice from its (angles, width) sinogram.

    Raises:
        ShapeError: angle count does not match the sinogram.
        InsufficientCoverageError: fewer than 2 angles or span below 180°.
    """
    projections = np.atleast_2d(np.asarray(projections, dtype=np.float64))
    angles = np.asarray(angles_deg, dtype=np.float64)
    if projections.shape[0] != angles.size:
        raise ShapeError(f"{angles.size} angles for a sinogram with {projections.shape[0]} rows")
    span = angular_span(angles)
    if angles.size < 2 or span < 180.0 - 1e-6:
        raise InsufficientCoverageError(f"angular span {span:.3f}° < 180° ({angles.size} angles)")

    width = projections.shape[1]
    filtered = ramp_filter(projections, spec)
    s_det = (np.arange(width) - (width - 1) / 2.0) * spacing
    x = (np.arange(grid.nx) - (grid.nx - 1) / 2.0) * grid.voxel
    z = (np.arange(grid.nz) - (grid.nz - 1) / 2.0) * grid.voxel
    xx, zz = np.meshgrid(x, z)

    out = np.zeros((grid.nz, grid.nx))
    for theta, q in zip(np.deg2rad(angles), filtered):
        s = xx * np.cos(theta) + zz * np.sin(theta)
        out += np.interp(s, s_det, q, left=0.0, right=0.0)
    return out * (np.pi / angles.size) / spacing


def reconstruct_volume(series: Union[Sequence[ProjectionImage], Sinogram],
                       spec: FilterSpec = FilterSpec(),
                       grid: Optional[ReconGrid] = None,
                       rows: Optional[Sequence[int]] = None,
                       threads: int = 1,
                       epsilon: float = config.LOG_EPSILON) -> Volume:
    """Stack of fbp_slice results, one per detector row.

    Args:
        series: rotation series or a prepared sinogram.
        grid: x–z grid; defaults to detector width at the axis spacing.
        rows: subset of detector rows (default: all).
    """
    sino = series if isinstance(series, Sinogram) else to_sinogram(series, epsilon)
    grid = grid or ReconGrid.for_sinogram(sino)
    rows = list(range(sino.n_rows)) if rows is None else [int(r) for r in rows]
    if not rows:
        raise ShapeError("no detector rows selected")
    for r in rows:
        if not 0 <= r < sino.n_rows:
            raise ShapeError(f"row {r} outside sinogram with {sino.n_rows} rows")

    def one(r: int) -> np.ndarray:
        return fbp_slice(sino.row(r), sino.angles_deg, grid, sino.spacing, spec)

    logger.info(f"FBP 重建: {len(rows)} 行, {sino.n_angles} 个角度, 网格 {grid.nx}×{grid.nz}")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            slices = list(pool.map(one, rows))
    else:
        slices = [one(r) for r in rows]

    values = np.stack(slices, axis=1)                                   # (nz, ny, nx)
    return Volume(values=values, voxel=grid.voxel, metadata={
        "filter": spec.model_dump(),
        "grid": grid.model_dump(),
        "rows": rows,
        "y_spacing": sino.spacing,
        "n_angles": sino.n_angles,
        "spec_id": sino.metadata.get("spec_id", ""),
    })
