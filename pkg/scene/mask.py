"""
Analytic ground-truth masks: a pixel is `defect` iff its ray meets a pore
ellipsoid. Uses the exact ellipsoid, not the tessellated mesh.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from scene.specimen import SpecimenSpec, specimen_meshes
from xray.geometry import ProjectionGeometry
from xray.projector import scene_centroid, turntable_matrix

BACKGROUND = 0
DEFECT = 1


@dataclass
class GroundTruthMask:
    values: np.ndarray                      # (H, W) uint8, 0 background / 1 defect
    geometry: Dict[str, Any] = field(default_factory=dict)
    spec_hash: str = ""

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def defect(self) -> np.ndarray:
        return self.values == DEFECT


def ground_truth_mask(spec: SpecimenSpec, geometry: ProjectionGeometry,
                      centroid: Optional[Sequence[float]] = None) -> GroundTruthMask:
    """Label every detector pixel whose source-to-pixel ray crosses a pore.

    The specimen turns about the same pivot the projector uses: `centroid`,
    or the bounding-box center of the decomposed specimen when omitted.
    """
    values = np.zeros(geometry.shape, dtype=np.uint8)
    turn = np.eye(4)
    if geometry.angle_deg != 0:
        pivot = scene_centroid(specimen_meshes(spec)) if centroid is None else centroid
        turn = turntable_matrix(geometry.angle_deg, pivot)
    spin = turn[:3, :3]

    for pore in spec.defects:
        linear = spin @ pore.rotation_matrix() @ np.diag(pore.semi_axes)
        center = spin @ np.asarray(pore.center) + turn[:3, 3]
        half = np.sqrt((linear ** 2).sum(axis=1))
        corners = center + half * np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        window = geometry.pixel_window(corners)
        if window is None:
            continue
        rs, cs = window
        rows, cols = np.meshgrid(np.arange(rs.start, rs.stop), np.arange(cs.start, cs.stop), indexing="ij")
        origins, directions = geometry.rays(rows, cols)

        to_local = np.linalg.inv(linear)
        o = (origins - center) @ to_local.T
        d = directions @ to_local.T
        od = np.einsum("ij,ij->i", o, d)
        dd = np.einsum("ij,ij->i", d, d)
        oo = np.einsum("ij,ij->i", o, o)
        hit = od * od - dd * (oo - 1.0) > 0.0
        values[rs, cs] |= hit.reshape(rows.shape).astype(np.uint8)

    return GroundTruthMask(values=values, geometry=geometry.model_dump(), spec_hash=spec.content_hash())
