"""
Ellipse fitting of pixel clusters.

The moment fit takes the centroid and the covariance eigendecomposition of
the cluster pixels; the semi-axes 2√λ are scaled so that πab equals the
pixel count. The optional refinement fits the ellipse to the cluster's
boundary pixels by geometric least squares starting from the moment fit.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import DegenerateFitError

logger = logging.getLogger(__name__)


def normalize_angle(theta_deg: float) -> float:
    """Map an axis orientation onto (−90, 90]."""
    t = float(np.mod(theta_deg + 90.0, 180.0) - 90.0)
    return 90.0 if t == -90.0 else t


@dataclass(frozen=True)
class EllipseFit:
    cx: float
    cy: float
    a: float                    # semi-major, pixels
    b: float                    # semi-minor, pixels
    theta_deg: float            # major-axis orientation in (−90, 90]

    @property
    def area(self) -> float:
        return float(np.pi * self.a * self.b)

    @classmethod
    def disk(cls, cx: float, cy: float, count: int) -> "EllipseFit":
        r = float(np.sqrt(count / np.pi))
        return cls(cx, cy, r, r, 0.0)


def fit_ellipse(points: np.ndarray, refine: bool = config.ELLIPSE_REFINE) -> EllipseFit:
    """Fit an ellipse to the (x, y) pixels of one cluster.

    Raises:
        DegenerateFitError: fewer than 3 points, or points collinear / coincident.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise DegenerateFitError(f"need at least 3 points, got {pts.shape[0]}")
    center = pts.mean(axis=0)
    d = pts - center
    cov = d.T @ d / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)             # ascending
    if evals[1] <= 0 or evals[0] <= 1e-12 * evals[1]:
        raise DegenerateFitError(f"points are collinear or coincident (eigenvalues {evals.tolist()})")

    a, b = 2.0 * np.sqrt(evals[1]), 2.0 * np.sqrt(evals[0])
    k = np.sqrt(pts.shape[0] / (np.pi * a * b))
    major = evecs[:, 1]
    theta = normalize_angle(np.degrees(np.arctan2(major[1], major[0])))
    fit = EllipseFit(float(center[0]), float(center[1]), float(a * k), float(b * k), theta)
    return refine_ellipse(pts, fit) if refine else fit


def boundary_pixels(points: np.ndarray) -> np.ndarray:
    """Integer pixels of the set with at least one 4-neighbour outside it."""
    ij = np.round(points).astype(np.int64)
    occupied = {tuple(p) for p in ij.tolist()}
    keep = [p for p in ij.tolist()
            if any((p[0] + dx, p[1] + dy) not in occupied for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))]
    return np.asarray(keep, dtype=np.float64).reshape(-1, 2)


def refine_ellipse(points: np.ndarray, initial: EllipseFit) -> EllipseFit:
    """Least-squares ellipse through the boundary pixels of `points`.

    Boundary pixel centers lie half a pixel inside the region edge, so the
    fitted semi-axes are widened by 0.5.
    """
    edge = boundary_pixels(points)
    if edge.shape[0] < 5:
        return initial

    def residuals(p):
        cx, cy, a, b, t = p
        c, s = np.cos(t), np.sin(t)
        dx, dy = edge[:, 0] - cx, edge[:, 1] - cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (np.sqrt((u / a) ** 2 + (v / b) ** 2) - 1.0) * np.sqrt(a * b)

    x0 = [initial.cx, initial.cy, max(initial.a - 0.5, 0.5), max(initial.b - 0.5, 0.5),
          np.radians(initial.theta_deg)]
    lower = [-np.inf, -np.inf, 1e-3, 1e-3, -np.inf]
    result = least_squares(residuals, x0, bounds=(lower, np.inf))
    if not result.success:
        logger.warning(f"椭圆细化未收敛, 保留矩拟合: {result.message}")
        return initial
    cx, cy, a, b, t = result.x
    theta = np.degrees(t)
    if b > a:
        a, b, theta = b, a, theta + 90.0
    return EllipseFit(float(cx), float(cy), float(a + 0.5), float(b + 0.5), normalize_angle(theta))
