"""
Model container format.

    magic "RSMD" | uint32 version | uint32 header length | JSON header | float32 LE payload

The header carries the model kind, the layer architecture, provenance and a
manifest of (name, shape, offset) for every parameter array in the payload.
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ManifestError
from nn.network import Sequential

PathLike = Union[str, Path]
_PREFIX = struct.Struct("<4sII")


def save_model(path: PathLike, network: Sequential, kind: str,
               provenance: Optional[Dict[str, Any]] = None,
               extra: Optional[Dict[str, Any]] = None) -> Path:
    manifest, chunks, offset = [], [], 0
    for name, value in network.named_params():
        data = np.ascontiguousarray(value, dtype="<f4")
        manifest.append({"name": name, "shape": list(value.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({
        "kind": kind,
        "architecture": network.architecture(),
        "provenance": provenance or {},
        "extra": extra or {},
        "params": manifest,
    }, sort_keys=True).encode("utf-8")

    path = Path(path)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(config.MODEL_MAGIC, config.MODEL_VERSION, len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    return path


def read_header(path: PathLike) -> Tuple[Dict[str, Any], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ManifestError(f"{path}: truncated model file")
    magic, version, size = _PREFIX.unpack_from(raw)
    if magic != config.MODEL_MAGIC:
        raise ManifestError(f"{path}: not a model file (magic {magic!r})")
    if version != config.MODEL_VERSION:
        raise ManifestError(f"{path}: unsupported model version {version}")
    start = _PREFIX.size
    header = json.loads(raw[start:start + size].decode("utf-8"))
    return header, raw[start + size:]


def load_model(path: PathLike, kind: Optional[str] = None) -> Tuple[Sequential, Dict[str, Any]]:
    """Rebuild the network; weights come back as float64 of the stored float32."""
    header, payload = read_header(path)
    if kind is not None and header["kind"] != kind:
        raise ManifestError(f"{path}: model kind {header['kind']}, expected {kind}")
    network = Sequential.from_architecture(header["architecture"])
    params = {}
    for entry in header["params"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        params[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
    network.load_params(params)
    return network, header
