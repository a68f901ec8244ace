"""
Multi-material decomposition of nested CSG specimens.

A tree of the form difference(host, union(body₁..bodyₙ)) (optionally wrapped
in transforms, or written difference(host, body₁, body₂, ...)) becomes one
host mesh carrying μ_host plus one mesh per enclosed body carrying the
effective coefficient μ_inner − μ_host. Summing μ·L over all meshes along a
ray then equals the two-region Beer-Lambert integral.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from errors import ContainmentError, UnsupportedConstructError
from scene.csg import Boolean, BooleanOp, CsgNode, Transformed, has_boolean
from scene.mesh import Material, TriMesh, face_normals, tessellate

logger = logging.getLogger(__name__)

Leaf = Tuple[CsgNode, np.ndarray, str]


def decompose(
    node: CsgNode,
    host_material: Material,
    inner_material: Material,
    segments: Optional[int] = None,
    check_overlap: bool = True,
) -> List[Tuple[TriMesh, Material]]:
    """Split a nested specimen tree into single-density meshes.

    Args:
        node: difference(host, union(...)) tree, or a Boolean-free host.
        host_material: material of the host body.
        inner_material: material filling every enclosed body (e.g. air).
        segments: sphere tessellation override.
        check_overlap: also reject enclosed bodies that intersect each other.

    Returns:
        [(host_mesh, host_material), (body_mesh, effective_material), ...]
    """
    host_leaf, body_leaves = _match(node, np.eye(4), "root")
    host = _mesh(host_leaf, segments, "host").with_material(host_material)
    effective = Material(
        name=f"{inner_material.name}-in-{host_material.name}",
        mu=inner_material.mu - host_material.mu,
        effective=True,
    )
    bodies = [_mesh(leaf, segments, f"body-{i}").with_material(effective)
              for i, leaf in enumerate(body_leaves)]

    planes = _face_planes(host)
    tol = 1e-9 * max(host.diameter, 1.0)
    for i, body in enumerate(bodies):
        if not _strictly_inside(body.vertices, planes, tol):
            raise ContainmentError(
                f"enclosed body {i} ({body_leaves[i][2]}) crosses the host boundary")
    if check_overlap:
        _check_pairwise_disjoint(bodies, body_leaves)

    logger.debug(f"分解完成: 1 个宿主 + {len(bodies)} 个内含体")
    return [(host, host_material)] + [(b, effective) for b in bodies]


# ── pattern matching ──────────────────────────────────────────────────

def _match(node: CsgNode, matrix: np.ndarray, path: str) -> Tuple[Leaf, List[Leaf]]:
    if isinstance(node, Transformed):
        return _match(node.child, matrix @ node.transform.matrix(), f"{path}/transformed")
    if not isinstance(node, Boolean):
        return (node, matrix, path), []
    if node.op is not BooleanOp.DIFFERENCE or not node.children:
        raise UnsupportedConstructError(
            f"only difference(host, union(...)) is supported, found '{node.op.value}'", path)
    host = node.children[0]
    if has_boolean(host):
        raise UnsupportedConstructError("host of a difference must be Boolean-free",
                                        f"{path}/difference[0]")
    bodies: List[Leaf] = []
    for i, child in enumerate(node.children[1:], start=1):
        _collect_bodies(child, matrix, f"{path}/difference[{i}]", bodies)
    return (host, matrix, f"{path}/difference[0]"), bodies


def _collect_bodies(node: CsgNode, matrix: np.ndarray, path: str, out: List[Leaf]) -> None:
    if isinstance(node, Transformed):
        if not has_boolean(node.child):
            out.append((node, matrix, path))
            return
        _collect_bodies(node.child, matrix @ node.transform.matrix(), f"{path}/transformed", out)
        return
    if isinstance(node, Boolean):
        if node.op is not BooleanOp.UNION:
            raise UnsupportedConstructError(
                f"enclosed bodies must be primitives or unions, found '{node.op.value}'", path)
        for i, child in enumerate(node.children):
            _collect_bodies(child, matrix, f"{path}/union[{i}]", out)
        return
    out.append((node, matrix, path))


def _mesh(leaf: Leaf, segments: Optional[int], name: str) -> TriMesh:
    node, matrix, _ = leaf
    mesh = tessellate(node, segments).transformed(matrix)
    mesh.name = name
    return mesh


# ── containment ───────────────────────────────────────────────────────

def _face_planes(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """Unit outward normals and offsets (n·x ≤ d inside) of a convex mesh."""
    normals = face_normals(mesh)
    lengths = np.linalg.norm(normals, axis=1)
    keep = lengths > 0
    normals = normals[keep] / lengths[keep, None]
    offsets = np.einsum("ij,ij->i", normals, mesh.triangle_vertices()[keep, 0])
    return normals, offsets


def _strictly_inside(points: np.ndarray, planes, tol: float) -> bool:
    normals, offsets = planes
    return bool(np.all(points @ normals.T - offsets < -tol))


def _check_pairwise_disjoint(bodies: List[TriMesh], leaves: List[Leaf]) -> None:
    if len(bodies) < 2:
        return
    lo = np.array([b.bounds[0] for b in bodies])
    hi = np.array([b.bounds[1] for b in bodies])
    boxes_meet = np.all((lo[:, None, :] <= hi[None, :, :]) & (lo[None, :, :] <= hi[:, None, :]), axis=2)
    ii, jj = np.nonzero(np.triu(boxes_meet, k=1))
    planes = [None] * len(bodies)
    for i, j in zip(ii, jj):
        for k in (i, j):
            if planes[k] is None:
                planes[k] = _face_planes(bodies[k])
        if _convex_overlap(planes[i], planes[j], bodies[i].diameter + bodies[j].diameter):
            raise ContainmentError(
                f"enclosed bodies {i} ({leaves[i][2]}) and {j} ({leaves[j][2]}) overlap")


def _convex_overlap(a, b, scale: float) -> bool:
    """True when two convex polytopes share interior points.

    Maximizes the inscribed margin s of a point inside both; s > 0 means
    the interiors intersect.
    """
    normals = np.vstack([a[0], b[0]])
    offsets = np.concatenate([a[1], b[1]])
    a_ub = np.hstack([normals, np.ones((normals.shape[0], 1))])
    res = linprog(c=[0.0, 0.0, 0.0, -1.0], A_ub=a_ub, b_ub=offsets,
                  bounds=[(None, None)] * 3 + [(None, scale)], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-9 * scale)
