"""
Vectorized ray / triangle-mesh path lengths (Möller–Trumbore).

For a closed, outward-wound mesh and a ray starting outside it, the length
inside is Σ sign·t over all hits, where exits count +t and entries −t.
Hits that coincide (same ray, same sign, |Δt| ≤ tol) come from rays crossing
a shared edge or vertex and are counted once. A ray whose entry and exit
counts still disagree is retried once with a tiny lateral jitter.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, DegenerateHitError
from scene.mesh import TriMesh

logger = logging.getLogger(__name__)

# (rays × triangles) elements evaluated per vectorized block
_BLOCK_ELEMENTS = 1 << 19


def _hits(origins: np.ndarray, directions: np.ndarray, tri: np.ndarray,
          t_eps: float, bary_eps: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (ray index, t, sign) hits of a block of rays against all triangles."""
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    area_scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)

    p = np.cross(directions[:, None, :], e2[None, :, :])
    det = np.einsum("rtk,tk->rt", p, e1)
    ok = np.abs(det) > 1e-12 * area_scale[None, :]
    inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)

    tv = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("rtk,rtk->rt", tv, p) * inv
    q = np.cross(tv, e1[None, :, :])
    v = np.einsum("rk,rtk->rt", directions, q) * inv
    t = np.einsum("rtk,tk->rt", q, e2) * inv

    hit = ok & (u >= -bary_eps) & (v >= -bary_eps) & (u + v <= 1.0 + bary_eps) & (t > t_eps)
    ri, ti = np.nonzero(hit)
    # det > 0 ⇔ d·n < 0 ⇔ entering
    sign = -np.sign(det[ri, ti])
    return ri, t[ri, ti], sign


def _trace_block(origins, directions, tri, tol) -> Tuple[np.ndarray, np.ndarray]:
    n = origins.shape[0]
    ri, t, sign = _hits(origins, directions, tri, tol, 1e-9)
    if ri.size == 0:
        return np.zeros(n), np.zeros(n, dtype=bool)
    order = np.lexsort((t, sign, ri))
    ri, t, sign = ri[order], t[order], sign[order]
    dup = (ri[1:] == ri[:-1]) & (sign[1:] == sign[:-1]) & (t[1:] - t[:-1] <= tol)
    keep = np.concatenate([[True], ~dup])
    ri, t, sign = ri[keep], t[keep], sign[keep]

    entries = np.bincount(ri[sign < 0], minlength=n)
    exits = np.bincount(ri[sign > 0], minlength=n)
    lengths = np.bincount(ri, weights=sign * t, minlength=n)
    return lengths, entries != exits


def path_lengths(origins: np.ndarray, directions: np.ndarray, mesh: TriMesh,
                 jitter: float = 0.0) -> np.ndarray:
    """Length (mm) of each ray inside `mesh`.

    Args:
        origins: (R, 3) ray starts, outside the mesh.
        directions: (R, 3) unit directions.
        mesh: watertight, outward-wound mesh.
        jitter: lateral offset (mm) for the one retry of degenerate rays.

    Raises:
        DegenerateHitError: a ray is still unbalanced after the jittered retry.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    out = np.zeros(n)
    if n == 0 or mesh.n_triangles == 0:
        return out

    tri = mesh.triangle_vertices()
    tol = config.RAY_EPSILON * max(mesh.diameter, 1e-12)
    step = max(1, _BLOCK_ELEMENTS // tri.shape[0])
    bad = np.zeros(n, dtype=bool)
    for s in range(0, n, step):
        sl = slice(s, min(s + step, n))
        out[sl], bad[sl] = _trace_block(origins[sl], directions[sl], tri, tol)

    if bad.any():
        idx = np.nonzero(bad)[0]
        shift = _perpendicular(directions[idx]) * (jitter or config.RAY_JITTER * mesh.diameter)
        retry, still_bad = _trace_block(origins[idx] + shift, directions[idx], tri, tol)
        if still_bad.any():
            raise DegenerateHitError(
                f"{int(still_bad.sum())} rays through mesh '{mesh.name}' have unbalanced "
                "entry/exit hits after jitter")
        logger.warning(f"{idx.size} 条退化射线已抖动重试 (mesh '{mesh.name}')")
        out[idx] = retry
    return out


def _perpendicular(directions: np.ndarray) -> np.ndarray:
    helper = np.where(np.abs(directions[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    perp = np.cross(directions, helper)
    return perp / np.linalg.norm(perp, axis=1, keepdims=True)


def ray_path_lengths(origin: Sequence[float], direction: Sequence[float],
                     meshes: List[TriMesh]) -> np.ndarray:
    """Per-mesh path length (mm) of a single ray; 0 where it misses."""
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ConfigError("ray direction must be nonzero")
    o = np.asarray(origin, dtype=np.float64)[None, :]
    d = (direction / norm)[None, :]
    return np.array([path_lengths(o, d, mesh)[0] for mesh in meshes])
