"""
Monte Carlo specimen generators.

Pore plates are packed by rejection sampling: each pore is redrawn until it
fits inside the plate (minus margin) without touching a previously placed
pore, up to a bounded retry budget.
"""
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ConfigError, PackingError
from scene.mesh import Material
from scene.specimen import Layer, PoreSpec, SpecimenSpec, material_preset

logger = logging.getLogger(__name__)


def generate_pore_plate(
    plate_size: Tuple[float, float, float] = config.PLATE_SIZE,
    count: Optional[int] = None,
    count_mean: float = config.PORE_COUNT_MEAN,
    base_radius: float = config.PORE_BASE_RADIUS,
    scale_range: Tuple[float, float] = config.PORE_SCALE_RANGE,
    rotation_range: Tuple[float, float] = config.PORE_ROTATION_RANGE,
    margin: float = config.PORE_MARGIN,
    seed: int = config.DEFAULT_SEED,
    max_retries: int = config.PORE_MAX_RETRIES,
    clearance: float = config.PORE_CLEARANCE,
    host_material: Optional[Material] = None,
    defect_material: Optional[Material] = None,
) -> SpecimenSpec:
    """
    Generate a plate with randomly placed, non-overlapping ellipsoidal pores.

    Args:
        plate_size: (x, y, z) in mm, thickness along z.
        count: exact pore count; None draws Poisson(count_mean) truncated to >= 1.
        base_radius: sphere radius before per-axis scaling (mm).
        scale_range: uniform bounds of each per-axis scale factor.
        rotation_range: uniform bounds of the rotation about z (degrees).
        margin: clearance between every pore and the plate faces (mm).
        seed: generator seed; the result is a pure function of all arguments.
        max_retries: draws allowed per pore before giving up.
        clearance: factor on every pore extent for the containment and
            overlap tests, leaving room for tessellated vertices that sit
            slightly outside the analytic ellipsoid.

    Returns:
        SpecimenSpec of kind "pore_plate".

    Raises:
        ConfigError: margins leave no interior or distribution bounds invalid.
        PackingError: the retry budget ran out; reports the achieved count.
    """
    half = np.asarray(plate_size, dtype=np.float64) / 2.0 - margin
    if np.any(half <= 0):
        raise ConfigError(f"margin {margin} leaves no interior in plate {plate_size}")
    if not 0 < scale_range[0] <= scale_range[1]:
        raise ConfigError(f"invalid scale range {scale_range}")
    if rotation_range[0] > rotation_range[1]:
        raise ConfigError(f"invalid rotation range {rotation_range}")
    if base_radius <= 0:
        raise ConfigError(f"base radius must be > 0, got {base_radius}")
    if count is not None and count < 0:
        raise ConfigError(f"pore count must be >= 0, got {count}")

    rng = np.random.default_rng(seed)
    drawn = count is None
    if drawn:
        count = 0
        while count < 1:
            count = int(rng.poisson(count_mean))

    pores: List[PoreSpec] = []
    centers = np.empty((0, 3))
    radii = np.empty(0)
    for index in range(count):
        for _ in range(max_retries):
            scale = rng.uniform(scale_range[0], scale_range[1], size=3)
            rot = float(rng.uniform(rotation_range[0], rotation_range[1]))
            probe = PoreSpec(center=(0.0, 0.0, 0.0), base_radius=base_radius,
                             scale=tuple(scale), rotation_z=rot)
            room = half - clearance * probe.half_extents()
            if np.any(room <= 0):
                continue
            center = rng.uniform(-room, room)
            r = clearance * probe.bounding_radius
            if len(pores) and np.any(np.linalg.norm(centers - center, axis=1) <= radii + r):
                continue
            pores.append(probe.model_copy(update={"center": tuple(float(c) for c in center)}))
            centers = np.vstack([centers, center])
            radii = np.append(radii, r)
            break
        else:
            raise PackingError(f"rejection budget of {max_retries} exhausted at pore {index}",
                               achieved=len(pores), requested=count)

    logger.info(f"生成孔隙板: {len(pores)} 个孔隙, seed={seed}")
    return SpecimenSpec(
        kind="pore_plate",
        plate_size=tuple(float(s) for s in plate_size),
        defects=pores,
        host_material=host_material or material_preset("aluminum"),
        defect_material=defect_material or material_preset("air"),
        rng_seed=seed,
        generator={
            "count": count,
            "count_mean": count_mean if drawn else None,
            "base_radius": base_radius,
            "scale_range": list(scale_range),
            "rotation_range": list(rotation_range),
            "margin": margin,
            "max_retries": max_retries,
            "clearance": clearance,
        },
    )


LayerInput = Union[Layer, Tuple[Union[str, Material], float]]


def generate_fml_stack(
    layers: Sequence[LayerInput],
    plate_xy: Tuple[float, float] = config.PLATE_SIZE[:2],
) -> SpecimenSpec:
    """Flat layered stack (e.g. aluminum / PREG alternating), bottom layer first."""
    parsed: List[Layer] = []
    for item in layers:
        if isinstance(item, Layer):
            parsed.append(item)
            continue
        material, thickness = item
        if isinstance(material, str):
            material = material_preset(material)
        if thickness <= 0:
            raise ConfigError(f"layer thickness must be > 0, got {thickness}")
        parsed.append(Layer(material=material, thickness=float(thickness)))
    if not parsed:
        raise ConfigError("an FML stack needs at least one layer")

    total = float(np.sum([layer.thickness for layer in parsed]))
    logger.info(f"生成 FML 叠层: {len(parsed)} 层, 总厚 {total:.3f} mm")
    return SpecimenSpec(
        kind="fml_stack",
        plate_size=(float(plate_xy[0]), float(plate_xy[1]), total),
        layers=parsed,
        host_material=parsed[0].material,
        generator={"layers": len(parsed)},
    )


def glare_layers(metal_mm: float = 0.4, preg_mm: float = 0.25, n_layers: int = 5,
                 metal: str = "aluminum") -> List[Tuple[str, float]]:
    """Alternating metal / PREG layer list starting and ending with metal."""
    return [(metal, metal_mm) if i % 2 == 0 else ("preg", preg_mm) for i in range(n_layers)]
