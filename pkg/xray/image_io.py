"""
ProjectionImage and its file formats.

  - 16-bit grayscale PNG and binary PGM (P5) via Pillow
  - raw float32 little-endian with a JSON sidecar (width, height, pitch, metadata)
  - 8-bit PNG for binary masks
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from PIL import Image

PathLike = Union[str, Path]


@dataclass
class ProjectionImage:
    """Relative intensity I/I₀ on the detector grid."""
    values: np.ndarray                  # (H, W) float64
    pitch: float                        # mm
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def angle_deg(self) -> float:
        return float(self.metadata.get("geometry", {}).get("angle_deg", 0.0))

    def with_values(self, values: np.ndarray, **extra) -> "ProjectionImage":
        meta = dict(self.metadata)
        meta.update(extra)
        return ProjectionImage(values=values, pitch=self.pitch, metadata=meta)


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_raw(path: PathLike, array: np.ndarray, meta: Dict[str, Any]) -> Tuple[Path, Path]:
    """float32 little-endian payload + JSON sidecar describing it."""
    path = Path(path)
    np.ascontiguousarray(array, dtype="<f4").tofile(path)
    side = sidecar_path(path)
    side.write_text(json.dumps({"shape": list(array.shape), **meta}, indent=2, sort_keys=True),
                    encoding="utf-8")
    return path, side


def read_raw(path: PathLike) -> Tuple[np.ndarray, Dict[str, Any]]:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    values = np.fromfile(path, dtype="<f4").astype(np.float64).reshape(meta["shape"])
    return values, meta


def write_image_raw(path: PathLike, img: ProjectionImage) -> Tuple[Path, Path]:
    meta = {"width": img.width, "height": img.height, "pitch": img.pitch, "metadata": img.metadata}
    return write_raw(path, img.values, meta)


def read_image_raw(path: PathLike) -> ProjectionImage:
    values, meta = read_raw(path)
    return ProjectionImage(values=values, pitch=float(meta["pitch"]), metadata=meta.get("metadata", {}))


def write_png16(path: PathLike, counts: np.ndarray) -> Path:
    """Write an integer image (values within uint16) as 16-bit grayscale PNG."""
    Image.fromarray(np.asarray(counts, dtype=np.uint16)).save(Path(path), format="PNG")
    return Path(path)


def read_png16(path: PathLike) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im, dtype=np.int64).astype(np.uint16)


def write_pgm(path: PathLike, counts: np.ndarray) -> Path:
    """Binary PGM (P5), maxval 65535."""
    Image.fromarray(np.asarray(counts, dtype=np.int32)).save(Path(path), format="PPM")
    return Path(path)


def read_pgm(path: PathLike) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im, dtype=np.int64).astype(np.uint16)


def write_gray8(path: PathLike, values: np.ndarray, lo: float, hi: float) -> Path:
    """Window [lo, hi] onto 0..255 and save as 8-bit PNG."""
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.asarray(values, dtype=np.float64) - lo) / span, 0.0, 1.0)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8)).save(Path(path), format="PNG")
    return Path(path)
