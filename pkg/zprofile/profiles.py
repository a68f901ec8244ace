"""
Z-profiles: density along z averaged over a w×w square of each slice.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ShapeError
from recon.volume import Volume


@dataclass
class ZProfile:
    values: np.ndarray          # (nz,) 1/mm
    x: int                      # window origin, voxel index
    y: int
    window: int


@dataclass
class ZProfileGrid:
    values: np.ndarray          # (gy, gx, nz)
    xs: np.ndarray              # (gx,) window origins
    ys: np.ndarray              # (gy,)
    window: int
    stride: int

    @property
    def shape(self):
        return self.values.shape[:2]

    @property
    def length(self) -> int:
        return int(self.values.shape[2])

    def flat(self) -> np.ndarray:
        """(gy·gx, nz) profiles in row-major grid order."""
        return self.values.reshape(-1, self.length)

    def profile(self, iy: int, ix: int) -> ZProfile:
        return ZProfile(self.values[iy, ix], int(self.xs[ix]), int(self.ys[iy]), self.window)


def extract_zprofiles(volume: Volume, window: int = config.ZPROFILE_WINDOW,
                      stride: Optional[int] = None) -> ZProfileGrid:
    """Profiles at every `stride`-th window origin (default stride = window).

    Raises:
        ShapeError: window < 1, stride < 1 or window larger than the x–y extent.
    """
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ShapeError(f"window and stride must be >= 1, got {window}, {stride}")
    if window > min(volume.nx, volume.ny):
        raise ShapeError(f"window {window} exceeds volume x–y extent {volume.nx}×{volume.ny}")
    win = sliding_window_view(volume.values, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    means = win.mean(axis=(-2, -1))                        # (nz, gy, gx)
    gy, gx = means.shape[1:]
    return ZProfileGrid(
        values=np.ascontiguousarray(means.transpose(1, 2, 0)),
        xs=np.arange(gx) * stride,
        ys=np.arange(gy) * stride,
        window=window,
        stride=stride,
    )
