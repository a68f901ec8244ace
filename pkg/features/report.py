"""
PoreReport: one CSV row per detected pore cluster.
"""
import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.inference import FeatureMap
from errors import DegenerateFitError
from features.clustering import ClusterSet, dbscan
from features.ellipse import EllipseFit, fit_ellipse
from features.threshold import threshold_map

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["cluster_id", "cx", "cy", "a", "b", "theta_deg", "pixel_count", "mean_score"]


def pore_report(clusters: ClusterSet, fits: Dict[int, EllipseFit],
                scores: Union[FeatureMap, np.ndarray]) -> pd.DataFrame:
    """Rows ordered by cluster id; mean_score averages the map over member pixels."""
    values = scores.scores if isinstance(scores, FeatureMap) else np.asarray(scores)
    rows = []
    for k in range(clusters.n_clusters):
        members = clusters.members(k)
        ij = np.round(members).astype(np.int64)
        fit = fits[k]
        rows.append({
            "cluster_id": k, "cx": fit.cx, "cy": fit.cy, "a": fit.a, "b": fit.b,
            "theta_deg": fit.theta_deg, "pixel_count": int(members.shape[0]),
            "mean_score": float(values[ij[:, 1], ij[:, 0]].mean()),
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def fit_clusters(clusters: ClusterSet, refine: bool = config.ELLIPSE_REFINE) -> Dict[int, EllipseFit]:
    """Ellipse per cluster; degenerate clusters fall back to an area-matched disk."""
    fits = {}
    for k, members in clusters.clusters().items():
        try:
            fits[k] = fit_ellipse(members, refine=refine)
        except DegenerateFitError as e:
            cx, cy = members.mean(axis=0)
            logger.warning(f"簇 {k} 椭圆拟合退化, 使用等面积圆: {e}")
            fits[k] = EllipseFit.disk(float(cx), float(cy), members.shape[0])
    return fits


def characterize(fmap: Union[FeatureMap, np.ndarray], tau: float = config.THRESHOLD_TAU,
                 eps: float = config.DBSCAN_EPS, min_pts: int = config.DBSCAN_MIN_PTS,
                 refine: bool = config.ELLIPSE_REFINE) -> Tuple[ClusterSet, Dict[int, EllipseFit], pd.DataFrame]:
    """threshold → DBSCAN → ellipse fits → report."""
    _, points = threshold_map(fmap, tau)
    clusters = dbscan(points, eps, min_pts)
    fits = fit_clusters(clusters, refine)
    logger.info(f"特征提取: {points.shape[0]} 个点, {clusters.n_clusters} 个簇, {clusters.n_noise} 个噪声点")
    return clusters, fits, pore_report(clusters, fits, fmap)


def write_pore_report(path: Union[str, Path], report: pd.DataFrame) -> Path:
    report.to_csv(path, index=False, float_format=config.CSV_FLOAT_FORMAT)
    return Path(path)


def read_pore_report(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"cluster_id": np.int64, "pixel_count": np.int64})
