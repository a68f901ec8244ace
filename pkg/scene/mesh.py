"""
Triangle meshes: primitive tessellation, watertightness checks, volumes.
"""
import logging
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from errors import ConfigError, TopologyError, UnsupportedConstructError
from scene.csg import Boolean, Box, CsgNode, Sphere, Transformed
from scene import transform as tf

logger = logging.getLogger(__name__)


class Material(BaseModel):
    """Linear attenuation μ in 1/mm. Effective materials may be negative."""
    model_config = ConfigDict(frozen=True)

    name: str
    mu: float
    effective: bool = False

    @model_validator(mode="after")
    def _physical_mu(self):
        if not self.effective and self.mu < 0:
            raise ValueError(f"material '{self.name}' has negative mu {self.mu}")
        return self


@dataclass
class TriMesh:
    vertices: np.ndarray                 # (N, 3) mm
    triangles: np.ndarray                # (M, 3) vertex indices
    material: Optional[Material] = None
    name: str = ""

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def corners(self) -> np.ndarray:
        """The 8 corners of the axis-aligned bounding box."""
        lo, hi = self.bounds
        idx = np.array([[i >> 0 & 1, i >> 1 & 1, i >> 2 & 1] for i in range(8)])
        return np.where(idx == 0, lo, hi)

    def triangle_vertices(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def transformed(self, matrix: np.ndarray) -> "TriMesh":
        return replace(self, vertices=tf.apply(matrix, self.vertices))

    def with_material(self, material: Material) -> "TriMesh":
        return replace(self, material=material)


# ── topology ──────────────────────────────────────────────────────────

def boundary_edges(triangles: np.ndarray) -> List[Tuple[int, int]]:
    """Edges violating the closed-2-manifold rule.

    A closed, consistently wound surface uses every directed edge exactly
    once and always together with its reverse.
    """
    tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if tri.size == 0:
        return []
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    n = int(tri.max()) + 1
    keys = directed[:, 0] * n + directed[:, 1]
    rkeys = directed[:, 1] * n + directed[:, 0]

    uniq, counts = np.unique(keys, return_counts=True)
    bad = np.isin(keys, uniq[counts > 1])          # duplicated directed edge
    bad |= ~np.isin(rkeys, keys)                   # missing partner
    bad |= directed[:, 0] == directed[:, 1]        # degenerate triangle
    edges = {tuple(sorted(map(int, e))) for e in directed[bad]}
    return sorted(edges)


def check_watertight(mesh: TriMesh) -> None:
    """Raise TopologyError listing boundary edges if `mesh` is not closed."""
    edges = boundary_edges(mesh.triangles)
    if mesh.n_triangles == 0:
        raise TopologyError(f"mesh '{mesh.name}' has no triangles")
    if edges:
        raise TopologyError(f"mesh '{mesh.name}' is not watertight", edges)


def mesh_volume(mesh: TriMesh) -> float:
    """Signed volume by the divergence theorem; positive for outward winding."""
    check_watertight(mesh)
    v = mesh.triangle_vertices()
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def face_normals(mesh: TriMesh) -> np.ndarray:
    v = mesh.triangle_vertices()
    return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])


# ── primitives ────────────────────────────────────────────────────────

_BOX_TRIANGLES = np.array([
    [0, 2, 1], [0, 3, 2],      # z = 0
    [4, 5, 6], [4, 6, 7],      # z = 1
    [0, 1, 5], [0, 5, 4],      # y = 0
    [3, 7, 6], [3, 6, 2],      # y = 1
    [0, 4, 7], [0, 7, 3],      # x = 0
    [1, 2, 6], [1, 6, 5],      # x = 1
])
_BOX_CORNERS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=np.float64)


def box_mesh(size, centered: bool = True) -> TriMesh:
    size = np.asarray(size, dtype=np.float64)
    vertices = _BOX_CORNERS * size
    if centered:
        vertices -= size / 2.0
    return TriMesh(vertices, _BOX_TRIANGLES.copy(), name="box")


def _uv_sphere(segments: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit UV sphere: `segments` meridians, poles on ±z."""
    n_lon = segments
    n_lat = max(3, segments // 2)
    theta = np.pi * np.arange(1, n_lat) / n_lat
    phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    rings = np.stack([st * np.cos(phi), st * np.sin(phi), np.repeat(ct, n_lon, axis=1)], axis=-1)
    vertices = np.vstack([[0.0, 0.0, 1.0], rings.reshape(-1, 3), [0.0, 0.0, -1.0]])

    south = vertices.shape[0] - 1
    j = np.arange(n_lon)
    jn = (j + 1) % n_lon
    tris = [np.stack([np.zeros(n_lon, int), 1 + j, 1 + jn], axis=1)]
    for k in range(n_lat - 2):
        a, b = 1 + k * n_lon, 1 + (k + 1) * n_lon
        tris.append(np.stack([a + j, b + j, b + jn], axis=1))
        tris.append(np.stack([a + j, b + jn, a + jn], axis=1))
    last = 1 + (n_lat - 2) * n_lon
    tris.append(np.stack([np.full(n_lon, south), last + jn, last + j], axis=1))
    return vertices, np.vstack(tris)


@lru_cache(maxsize=32)
def _unit_sphere(segments: int, volume_matched: bool) -> Tuple[np.ndarray, np.ndarray]:
    vertices, triangles = _uv_sphere(segments)
    if volume_matched:
        poly = mesh_volume(TriMesh(vertices, triangles))
        vertices = vertices * ((4.0 / 3.0) * np.pi / poly) ** (1.0 / 3.0)
    vertices.setflags(write=False)
    triangles.setflags(write=False)
    return vertices, triangles


def sphere_mesh(radius: float, segments: int, volume_matched: bool = True) -> TriMesh:
    """UV sphere.

    With `volume_matched` the vertex radius is scaled so the polyhedron
    encloses exactly (4/3)πr³.
    """
    if segments < 6:
        raise ConfigError(f"sphere segments must be >= 6, got {segments}")
    vertices, triangles = _unit_sphere(int(segments), bool(volume_matched))
    return TriMesh(vertices * radius, triangles.copy(), name="sphere")


# ── tessellation ──────────────────────────────────────────────────────

def tessellate(
    node: CsgNode,
    segments: Optional[int] = None,
    material: Optional[Material] = None,
    volume_matched: bool = True,
) -> TriMesh:
    """Tessellate a Boolean-free CSG tree into one watertight mesh.

    Args:
        node: primitive or transform-of-primitive tree.
        segments: overrides every sphere's own segment count when given.
        material: attached to the result.
        volume_matched: see `sphere_mesh`.
    """
    if segments is not None and segments < 6:
        raise ConfigError(f"segments must be >= 6, got {segments}")
    mesh = _tessellate(node, np.eye(4), segments, volume_matched, "root")
    mesh.material = material
    return mesh


def _tessellate(node, matrix, segments, volume_matched, path) -> TriMesh:
    if isinstance(node, Transformed):
        return _tessellate(node.child, matrix @ node.transform.matrix(),
                           segments, volume_matched, f"{path}/transformed")
    if isinstance(node, Boolean):
        raise UnsupportedConstructError(
            f"'{node.op.value}' node cannot be tessellated directly; "
            "decompose difference(host, union(...)) trees with scene.decompose.decompose",
            path,
        )
    if isinstance(node, Box):
        mesh = box_mesh(node.size, node.centered)
    elif isinstance(node, Sphere):
        mesh = sphere_mesh(node.radius, segments or node.segments, volume_matched)
    else:
        raise UnsupportedConstructError(f"unknown node type {type(node).__name__}", path)
    return mesh.transformed(matrix)
