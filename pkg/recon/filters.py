"""
Ramp filtering of parallel projections.

The frequency response is the FFT of the band-limited spatial ramp kernel
h[0] = 1/4, h[odd n] = −1/(πn)², h[even n ≠ 0] = 0, optionally multiplied
by a Hann window and cut off at a fraction of Nyquist.
"""
from functools import lru_cache
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import fft

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config


class FilterSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ramp", "ramp_hann"] = config.FILTER_KIND
    cutoff: float = Field(default=config.FILTER_CUTOFF, gt=0, le=1)


def padded_length(width: int) -> int:
    """Smallest power of two ≥ 2·width."""
    return 1 << int(np.ceil(np.log2(max(2 * width, 2))))


@lru_cache(maxsize=16)
def _response(length: int, kind: str, cutoff: float) -> np.ndarray:
    n = np.fft.fftfreq(length) * length              # signed sample offsets 0, 1, …, −1
    kernel = np.zeros(length)
    kernel[0] = 0.25
    odd = (n.astype(int) % 2) == 1
    kernel[odd] = -1.0 / (np.pi * n[odd]) ** 2
    response = np.real(fft.fft(kernel))

    rel = np.abs(np.fft.fftfreq(length)) / 0.5      # 1.0 at Nyquist
    window = np.where(rel <= cutoff, 1.0, 0.0)
    if kind == "ramp_hann":
        window = window * 0.5 * (1.0 + np.cos(np.pi * np.minimum(rel / cutoff, 1.0)))
    out = response * window
    out.setflags(write=False)
    return out


def filter_response(length: int, spec: FilterSpec) -> np.ndarray:
    return _response(length, spec.kind, spec.cutoff)


def ramp_filter(projections: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Filter each row of `projections` (angles, width), zero-padded to ≥ 2× width.

    Output is in units of the input per detector sample; divide by the
    sample spacing to get per-mm values.
    """
    projections = np.atleast_2d(np.asarray(projections, dtype=np.float64))
    width = projections.shape[-1]
    length = padded_length(width)
    spectrum = fft.fft(projections, n=length, axis=-1)
    filtered = fft.ifft(spectrum * filter_response(length, spec), axis=-1)
    return np.real(filtered[..., :width])
