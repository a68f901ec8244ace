"""
STL reading and writing (binary and ASCII).

Binary layout: 80-byte header, uint32 triangle count, then 50 bytes per
triangle (normal, three vertices as float32 little-endian, uint16 attribute).
Identical vertices are welded on read so the indexed topology comes back.
"""
import logging
import re
from typing import Optional

import numpy as np

from errors import StlParseError
from scene.mesh import Material, TriMesh, face_normals

logger = logging.getLogger(__name__)

HEADER_SIZE = 80
STL_DTYPE = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertices", "<f4", (3, 3)),
    ("attr", "<u2"),
])
assert STL_DTYPE.itemsize == 50

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_FACET_RE = re.compile(
    rb"facet\s+normal\s+(?:" + _FLOAT.encode() + rb"\s+){3}outer\s+loop\s+(.*?)endloop\s+endfacet",
    re.DOTALL,
)
_VERTEX_RE = re.compile(rb"vertex\s+(" + _FLOAT.encode() + rb")\s+(" + _FLOAT.encode()
                        + rb")\s+(" + _FLOAT.encode() + rb")")


def stl_write(mesh: TriMesh, ascii: bool = False, name: str = "radisynth") -> bytes:
    normals = face_normals(mesh)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    tri = mesh.triangle_vertices()
    if ascii:
        lines = [f"solid {name}"]
        for n, v in zip(normals, tri):
            lines.append(f"  facet normal {n[0]:.9e} {n[1]:.9e} {n[2]:.9e}")
            lines.append("    outer loop")
            lines += [f"      vertex {p[0]:.9e} {p[1]:.9e} {p[2]:.9e}" for p in v]
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append(f"endsolid {name}")
        return ("\n".join(lines) + "\n").encode("ascii")

    records = np.zeros(mesh.n_triangles, dtype=STL_DTYPE)
    records["normal"] = normals
    records["vertices"] = tri
    header = name.encode("ascii")[:HEADER_SIZE].ljust(HEADER_SIZE, b" ")
    count = np.array([mesh.n_triangles], dtype="<u4").tobytes()
    return header + count + records.tobytes()


def stl_read(data: bytes, material: Optional[Material] = None, weld: bool = True) -> TriMesh:
    """Parse binary or ASCII STL bytes into an indexed mesh."""
    if _looks_binary(data):
        corners = _read_binary(data)
    elif data.lstrip().startswith(b"solid"):
        corners = _read_ascii(data)
    else:
        corners = _read_binary(data)

    flat = corners.reshape(-1, 3).astype(np.float64)
    if weld:
        vertices, inverse = np.unique(flat, axis=0, return_inverse=True)
        triangles = inverse.reshape(-1, 3)
    else:
        vertices, triangles = flat, np.arange(flat.shape[0]).reshape(-1, 3)
    logger.debug(f"读取 STL: {triangles.shape[0]} 个三角形, {vertices.shape[0]} 个顶点")
    return TriMesh(vertices, triangles, material=material, name="stl")


def _looks_binary(data: bytes) -> bool:
    if len(data) < HEADER_SIZE + 4:
        return False
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=HEADER_SIZE)[0])
    return len(data) == HEADER_SIZE + 4 + 50 * count


def _read_binary(data: bytes) -> np.ndarray:
    if len(data) < HEADER_SIZE + 4:
        raise StlParseError("truncated binary STL header", len(data))
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=HEADER_SIZE)[0])
    body = len(data) - HEADER_SIZE - 4
    if body < 50 * count:
        complete = body // 50
        raise StlParseError(
            f"triangle count {count} but only {complete} complete records",
            HEADER_SIZE + 4 + 50 * complete,
        )
    if body > 50 * count:
        raise StlParseError(f"{body - 50 * count} trailing bytes after {count} triangles",
                            HEADER_SIZE + 4 + 50 * count)
    records = np.frombuffer(data, dtype=STL_DTYPE, count=count, offset=HEADER_SIZE + 4)
    return records["vertices"].copy()


def _read_ascii(data: bytes) -> np.ndarray:
    end = data.rfind(b"endsolid")
    if end < 0:
        raise StlParseError("missing 'endsolid'", len(data))
    facets = []
    pos = data.find(b"facet", 0, end)
    while pos >= 0:
        m = _FACET_RE.match(data, pos, end)
        if m is None:
            raise StlParseError("malformed facet", pos)
        verts = _VERTEX_RE.findall(m.group(1))
        if len(verts) != 3:
            raise StlParseError(f"facet with {len(verts)} vertices", pos)
        facets.append([[float(c) for c in v] for v in verts])
        pos = data.find(b"facet", m.end(), end)
    return np.asarray(facets, dtype=np.float64).reshape(-1, 3, 3)
