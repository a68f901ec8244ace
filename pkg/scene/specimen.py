"""
Specimen specifications: the ground truth every simulation starts from.
"""
import hashlib
import io
import json
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from scene import csg
from scene.decompose import decompose
from scene.mesh import Material, TriMesh, box_mesh
from scene.transform import rotation_z

Vec3 = Tuple[float, float, float]

PORE_CSV_COLUMNS = ["id", "cx", "cy", "cz", "r", "sx", "sy", "sz", "rot_deg"]


def material_preset(name: str) -> Material:
    """Calibration μ for a named material (see config.MATERIAL_MU)."""
    if name not in config.MATERIAL_MU:
        raise ValueError(f"Unknown material: {name}. Available: {list(config.MATERIAL_MU)}")
    return Material(name=name, mu=config.MATERIAL_MU[name])


class PoreSpec(BaseModel):
    """One ellipsoidal pore: translate(center) ∘ rotate_z ∘ scale ∘ sphere(base_radius)."""
    model_config = ConfigDict(frozen=True)

    center: Vec3
    base_radius: float = Field(gt=0)
    scale: Vec3 = (1.0, 1.0, 1.0)
    rotation_z: float = 0.0

    @field_validator("scale")
    @classmethod
    def _positive(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError(f"pore scale must be > 0, got {v}")
        return v

    @property
    def semi_axes(self) -> np.ndarray:
        return self.base_radius * np.asarray(self.scale, dtype=np.float64)

    @property
    def bounding_radius(self) -> float:
        return float(self.semi_axes.max())

    def rotation_matrix(self) -> np.ndarray:
        return rotation_z(self.rotation_z)

    def half_extents(self) -> np.ndarray:
        """Exact half-widths of the rotated ellipsoid's axis-aligned box."""
        r = self.rotation_matrix() * self.semi_axes[None, :]
        return np.sqrt((r ** 2).sum(axis=1))

    def contains(self, points: np.ndarray) -> np.ndarray:
        local = (np.asarray(points) - np.asarray(self.center)) @ self.rotation_matrix()
        return ((local / self.semi_axes) ** 2).sum(axis=-1) < 1.0

    def to_csg(self, segments: int = config.SPHERE_SEGMENTS) -> csg.CsgNode:
        node = csg.scale(self.scale, csg.sphere(self.base_radius, segments))
        if self.rotation_z:
            node = csg.rotate((0.0, 0.0, self.rotation_z), node)
        return csg.translate(self.center, node)


class Layer(BaseModel):
    model_config = ConfigDict(frozen=True)

    material: Material
    thickness: float = Field(gt=0)


class SpecimenSpec(BaseModel):
    """Declarative specimen: host geometry, defects and materials.

    Plates lie in the x-y plane, centered on the origin, with thickness
    along z (the beam axis at zero rotation).
    """
    model_config = ConfigDict(frozen=True)

    schema_version: int = config.SPEC_SCHEMA_VERSION
    kind: Literal["pore_plate", "fml_stack"]
    plate_size: Vec3
    layers: List[Layer] = Field(default_factory=list)
    defects: List[PoreSpec] = Field(default_factory=list)
    host_material: Material
    defect_material: Material = Field(default_factory=lambda: material_preset("air"))
    rng_seed: Optional[int] = None
    generator: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("plate_size")
    @classmethod
    def _positive_size(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError(f"plate dimensions must be > 0, got {v}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind == "fml_stack":
            if not self.layers:
                raise ValueError("fml_stack needs at least one layer")
            total = sum(layer.thickness for layer in self.layers)
            if not np.isclose(total, self.plate_size[2], rtol=1e-12, atol=0.0):
                raise ValueError(f"layer thicknesses sum to {total}, plate is {self.plate_size[2]}")
        return self

    # ── serialization ──

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SpecimenSpec":
        return cls.model_validate(json.loads(text))

    def content_hash(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_defects(self, defects: List[PoreSpec]) -> "SpecimenSpec":
        return self.model_copy(update={"defects": list(defects)})


# ── CSG / meshes ──────────────────────────────────────────────────────

def specimen_to_csg(spec: SpecimenSpec, segments: int = config.SPHERE_SEGMENTS) -> csg.CsgNode:
    """The specimen as a CSG tree (what a CAD generator would emit)."""
    if spec.kind == "fml_stack":
        return csg.union(*[csg.translate((0.0, 0.0, z), csg.cube((*spec.plate_size[:2], t)))
                           for z, t in _layer_centers(spec)])
    host = csg.cube(spec.plate_size, centered=True)
    return csg.difference(host, csg.union(*[p.to_csg(segments) for p in spec.defects]))


def specimen_meshes(spec: SpecimenSpec, segments: int = config.SPHERE_SEGMENTS) -> List[Tuple[TriMesh, Material]]:
    """Decomposed (mesh, material) list consumed by the projector."""
    if spec.kind == "fml_stack":
        edges = layer_interfaces(spec)
        out = []
        for i, layer in enumerate(spec.layers):
            mesh = box_mesh((spec.plate_size[0], spec.plate_size[1], 1.0))
            # interfaces come from the same edge array, so neighbours share them bit-exactly
            mesh.vertices[:, 2] = np.where(mesh.vertices[:, 2] < 0, edges[i], edges[i + 1])
            mesh.name = f"layer-{i}"
            out.append((mesh.with_material(layer.material), layer.material))
        return out
    return decompose(specimen_to_csg(spec, segments), spec.host_material, spec.defect_material,
                     segments=segments)


def _layer_centers(spec: SpecimenSpec) -> List[Tuple[float, float]]:
    """(z_center, thickness) per layer, bottom layer first, stack centered on z=0."""
    edges = layer_interfaces(spec)
    return [(float((a + b) / 2.0), float(b - a)) for a, b in zip(edges[:-1], edges[1:])]


def layer_interfaces(spec: SpecimenSpec) -> np.ndarray:
    """z coordinates of every layer boundary, bottom to top."""
    edges = np.concatenate([[0.0], np.cumsum([layer.thickness for layer in spec.layers])])
    return edges - edges[-1] / 2.0


# ── CSV export ────────────────────────────────────────────────────────

def pores_to_frame(pores: List[PoreSpec]) -> pd.DataFrame:
    rows = [[i, *p.center, p.base_radius, *p.scale, p.rotation_z] for i, p in enumerate(pores)]
    return pd.DataFrame(rows, columns=PORE_CSV_COLUMNS)


def pores_to_csv(pores: List[PoreSpec]) -> str:
    buf = io.StringIO()
    pores_to_frame(pores).to_csv(buf, index=False, float_format=config.CSV_FLOAT_FORMAT)
    return buf.getvalue()


def pores_from_csv(text: str) -> List[PoreSpec]:
    frame = pd.read_csv(io.StringIO(text))
    return [
        PoreSpec(center=(r.cx, r.cy, r.cz), base_radius=r.r,
                 scale=(r.sx, r.sy, r.sz), rotation_z=r.rot_deg)
        for r in frame.itertuples(index=False)
    ]
