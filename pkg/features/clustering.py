"""
DBSCAN clustering of thresholded pixels.

Neighbourhoods are closed balls (distance ≤ eps) that include the point
itself. A border point reachable from two clusters joins the one discovered
first when core points are visited in input order.
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from sklearn.cluster import DBSCAN

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError

NOISE = -1


@dataclass
class ClusterSet:
    points: np.ndarray          # (N, 2)
    labels: np.ndarray          # (N,) cluster id or NOISE
    eps: float
    min_pts: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def n_noise(self) -> int:
        return int((self.labels == NOISE).sum())

    def members(self, cluster_id: int) -> np.ndarray:
        return self.points[self.labels == cluster_id]

    def clusters(self) -> Dict[int, np.ndarray]:
        return {k: self.members(k) for k in range(self.n_clusters)}

    def partition(self) -> List[frozenset]:
        """Clusters as sets of point indices (label names dropped)."""
        return [frozenset(np.flatnonzero(self.labels == k).tolist()) for k in range(self.n_clusters)]


def dbscan(points: np.ndarray, eps: float = config.DBSCAN_EPS,
           min_pts: int = config.DBSCAN_MIN_PTS) -> ClusterSet:
    if eps <= 0 or min_pts < 1:
        raise ConfigError(f"need eps > 0 and min_pts >= 1, got eps={eps}, min_pts={min_pts}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0:
        return ClusterSet(points, np.zeros(0, dtype=np.int64), eps, min_pts)
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(points).labels_
    return ClusterSet(points, labels.astype(np.int64), eps, min_pts)
