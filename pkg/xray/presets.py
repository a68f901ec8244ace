"""
Device presets for the three measuring-device classes (High-Q, Mid-Q, Low-Q).

Detector size, pitch, bit depth and SOD range follow the device table; SDD
defaults to 2·SOD (magnification 2). Noise σ values are calibration defaults.
"""
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from xray.geometry import ProjectionGeometry


class DevicePreset(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    width: int
    height: int
    pitch: float                        # mm
    bits: int
    sod_range: Tuple[float, float]      # mm
    focal_spot_mm: float
    noise_sigma: float
    magnification: float = 2.0

    def geometry(self, sod: Optional[float] = None, **overrides) -> ProjectionGeometry:
        """Geometry at `sod` (default: middle of the SOD range)."""
        sod = sod if sod is not None else sum(self.sod_range) / 2.0
        params = dict(sod=sod, sdd=sod * self.magnification, pitch=self.pitch,
                      width=self.width, height=self.height)
        params.update(overrides)
        return ProjectionGeometry(**params)


DEVICE_PRESETS: Dict[str, DevicePreset] = {
    "highq": DevicePreset(name="highq", width=2000, height=2000, pitch=0.02, bits=16,
                          sod_range=(50.0, 100.0), focal_spot_mm=0.005, noise_sigma=0.01),
    "midq": DevicePreset(name="midq", width=1000, height=1000, pitch=0.2, bits=16,
                         sod_range=(200.0, 700.0), focal_spot_mm=0.8, noise_sigma=0.05),
    "lowq": DevicePreset(name="lowq", width=2000, height=1000, pitch=0.04, bits=12,
                         sod_range=(200.0, 300.0), focal_spot_mm=0.8, noise_sigma=0.10),
}


def get_preset(name: str) -> DevicePreset:
    if name not in DEVICE_PRESETS:
        raise ValueError(f"Unknown device preset: {name}. Available: {list(DEVICE_PRESETS.keys())}")
    return DEVICE_PRESETS[name]


def list_presets() -> list:
    return list(DEVICE_PRESETS.keys())
