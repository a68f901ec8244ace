"""
Pipeline commands: each one validates its parameters with a pydantic model,
delegates to a domain module and registers the result in the workspace.

Every command writes its files into the artifact directory first and
commits the manifest entry last. An identical RunConfig reuses the cached
artifact instead of recomputing it.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.inference import FeatureMap, sliding_window_classify
from classifier.pixel_cnn import build, parse_arch
from classifier.segments import Segment, extract_training_segments
from classifier.training import TrainConfig, load_cnn, save_cnn, train_sgd
from errors import ConfigError, ManifestError, ShapeError
from features.clustering import ClusterSet, dbscan
from features.evaluation import PixelRates, evaluate_pixels
from features.report import characterize, fit_clusters, pore_report, write_pore_report
from features.threshold import threshold_map
from pipeline.run_config import RunConfig, derive_seed
from pipeline.workspace import ManifestEntry, Workspace, artifact_id
from recon.fbp import ReconGrid, reconstruct_volume
from recon.filters import FilterSpec
from recon.sinogram import to_sinogram
from recon.volume import Volume, export_slice_png, read_volume, write_volume
from scene.csg import to_scad
from scene.generator import generate_fml_stack, generate_pore_plate, glare_layers
from scene.mask import ground_truth_mask
from scene.mesh import TriMesh
from scene.specimen import SpecimenSpec, pores_to_csv, specimen_meshes, specimen_to_csg
from scene.stl import stl_write
from xray.detector import NoiseModel, QuantizationSpec, add_noise, dequantize, quantize
from xray.geometry import AcquisitionConfig, ProjectionGeometry
from xray.image_io import ProjectionImage, read_image_raw, read_raw, write_gray8, write_image_raw, write_png16, write_raw
from xray.presets import get_preset
from xray.projector import simulate_projection
from zprofile.anomaly import anomaly_map, calibrate_threshold, detection_auc, grid_truth, write_anomaly_map
from zprofile.autoencoder import AETrainConfig, create_autoencoder, load_ae, save_ae, train_ae
from zprofile.damage import DamageRegion, synth_damaged_volume
from zprofile.profiles import ZProfileGrid, extract_zprofiles
from zprofile.zcnn import ZCnnTrainConfig, build_zcnn, save_zcnn, train_zcnn

logger = logging.getLogger(__name__)


# ── parameter types ───────────────────────────────────────────────────

def _split_csv(value):
    """"a,b,c" → ["a", "b", "c"]; lists pass through (config files)."""
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


Csv = BeforeValidator(_split_csv)
FloatPair = Annotated[Tuple[float, float], Csv]
IntPair = Annotated[Tuple[int, int], Csv]
Vec3 = Annotated[Tuple[float, float, float], Csv]
IdList = Annotated[List[str], Csv]
OptionalIntList = Annotated[Optional[List[int]], Csv]
OptionalStrList = Annotated[Optional[List[str]], Csv]

DEFAULT_ARCH = "-".join(str(v) for v in config.CNN_ARCH)


class Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


@dataclass
class CommandContext:
    ws: Workspace
    seed: int = config.DEFAULT_SEED
    threads: int = config.DEFAULT_THREADS

    def child(self, label: str) -> "CommandContext":
        """Context for a sub-run with its own labelled seed."""
        return CommandContext(self.ws, derive_seed(self.seed, label), self.threads)


Produce = Callable[[Path, RunConfig], Tuple[List[Path], Dict[str, Any]]]


def _register(ctx: CommandContext, kind: str, command: str, params: BaseModel,
              inputs: Sequence[str], produce: Produce) -> ManifestEntry:
    run = RunConfig(command=command, seed=ctx.seed, threads=ctx.threads,
                    params=params.model_dump(mode="json"), inputs=list(inputs))
    digest = run.digest()
    cached = ctx.ws.cached(kind, digest)
    if cached is not None:
        logger.warning(f"复用已缓存工件: {cached.id}")
        return cached

    artifact = artifact_id(kind, digest)
    out = ctx.ws.artifact_dir(kind, artifact)
    files, meta = produce(out, run)
    run_file = out / "run.json"
    run_file.write_text(run.to_json(), encoding="utf-8")
    entry = ManifestEntry(
        id=artifact, kind=kind, digest=digest, parents=list(inputs), meta=meta,
        paths=[ctx.ws.relative(p) for p in [*files, run_file]],
    )
    return ctx.ws.commit(entry)


def _write_json(path: Path, data: Any) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8")
    return path


# ── artifact loaders ──────────────────────────────────────────────────

def load_spec(ws: Workspace, artifact: str) -> Tuple[ManifestEntry, SpecimenSpec]:
    """The specimen spec an artifact descends from."""
    for entry in ws.lineage(artifact):
        if entry.kind == "spec":
            return entry, SpecimenSpec.from_json(ws.file(entry, "spec.json").read_text(encoding="utf-8"))
    raise ManifestError(f"{artifact} does not trace back to a specimen spec")


def _numbered(ws: Workspace, entry: ManifestEntry, prefix: str) -> List[Path]:
    return sorted(ws.root / p for p in entry.paths
                  if Path(p).name.startswith(prefix) and p.endswith(".raw"))


def load_images(ws: Workspace, artifact: str) -> List[ProjectionImage]:
    entry = ws.get(artifact, "image-set")
    if entry.meta.get("role") == "segments":
        raise ConfigError(f"{artifact} is a segment set, not a projection image set")
    return [read_image_raw(p) for p in _numbered(ws, entry, "proj_")]


def load_feature_maps(ws: Workspace, artifact: str) -> List[FeatureMap]:
    entry = ws.get(artifact, "feature-map")
    if entry.meta.get("role") != "scores":
        raise ConfigError(f"{artifact} is a {entry.meta.get('role')} feature map, expected classifier scores")
    maps = []
    for path in _numbered(ws, entry, "scores_"):
        values, meta = read_raw(path)
        maps.append(FeatureMap(scores=values, metadata=meta.get("metadata", {})))
    return maps


def load_volume(ws: Workspace, artifact: str) -> Tuple[ManifestEntry, Volume]:
    entry = ws.get(artifact, "volume")
    return entry, read_volume(ws.file(entry, "volume.raw"))


def load_truth(ws: Workspace, entry: ManifestEntry) -> Optional[np.ndarray]:
    """(ny, nx) damage truth of a synthetic volume, if it has one."""
    if not any(Path(p).name == "truth.raw" for p in entry.paths):
        return None
    values, _ = read_raw(ws.file(entry, "truth.raw"))
    return values > 0.5


def load_profiles(ws: Workspace, artifact: str) -> ZProfileGrid:
    entry = ws.get(artifact, "feature-map")
    if entry.meta.get("role") != "zprofiles":
        raise ConfigError(f"{artifact} is not a z-profile grid")
    values, meta = read_raw(ws.file(entry, "profiles.raw"))
    stride = int(meta["stride"])
    return ZProfileGrid(values=values, xs=np.arange(values.shape[1]) * stride,
                        ys=np.arange(values.shape[0]) * stride, window=int(meta["window"]), stride=stride)


def image_truth(spec: SpecimenSpec, metadata: Dict[str, Any]) -> np.ndarray:
    """Analytic defect mask for the geometry recorded in image metadata."""
    geometry = ProjectionGeometry.model_validate(metadata["geometry"])
    return ground_truth_mask(spec, geometry).defect


def _merge(meshes: List[TriMesh], name: str) -> TriMesh:
    offsets = np.cumsum([0] + [m.vertices.shape[0] for m in meshes[:-1]])
    return TriMesh(
        vertices=np.vstack([m.vertices for m in meshes]),
        triangles=np.vstack([m.triangles + off for m, off in zip(meshes, offsets)]),
        name=name,
    )


def _write_spec(out: Path, spec: SpecimenSpec, segments: int) -> List[Path]:
    files = [out / "spec.json", out / "specimen.scad"]
    files[0].write_text(spec.to_json(), encoding="utf-8")
    files[1].write_text(to_scad(specimen_to_csg(spec, segments)), encoding="utf-8")
    if spec.kind == "pore_plate":
        files.append(out / "pores.csv")
        files[-1].write_text(pores_to_csv(spec.defects), encoding="utf-8")

    groups: Dict[str, List[TriMesh]] = {}
    for mesh, material in specimen_meshes(spec, segments):
        groups.setdefault(material.name, []).append(mesh)
    for name, meshes in groups.items():
        path = out / f"{name}.stl"
        path.write_bytes(stl_write(_merge(meshes, name), name=name))
        files.append(path)
    return files


# ── scene ─────────────────────────────────────────────────────────────

class GenPlateParams(Params):
    pores: Optional[int] = Field(default=None, ge=0, description="exact pore count (default: Poisson draw)")
    count_mean: float = Field(default=config.PORE_COUNT_MEAN, gt=0)
    plate: Vec3 = Field(default=config.PLATE_SIZE, description="plate size x,y,z in mm")
    base_radius: float = Field(default=config.PORE_BASE_RADIUS, gt=0)
    scale_range: FloatPair = config.PORE_SCALE_RANGE
    rotation_range: FloatPair = config.PORE_ROTATION_RANGE
    margin: float = Field(default=config.PORE_MARGIN, ge=0)
    max_retries: int = Field(default=config.PORE_MAX_RETRIES, ge=1)
    segments: int = Field(default=config.SPHERE_SEGMENTS, ge=3, description="sphere tessellation for exports")


def gen_plate(ctx: CommandContext, p: GenPlateParams) -> str:
    def produce(out: Path, run: RunConfig):
        spec = generate_pore_plate(
            plate_size=p.plate, count=p.pores, count_mean=p.count_mean, base_radius=p.base_radius,
            scale_range=p.scale_range, rotation_range=p.rotation_range, margin=p.margin,
            seed=run.seed_for("spec"), max_retries=p.max_retries,
        )
        meta = {"kind": spec.kind, "spec_hash": spec.content_hash(), "pores": len(spec.defects)}
        return _write_spec(out, spec, p.segments), meta

    return _register(ctx, "spec", "gen-plate", p, [], produce).id


class GenFmlParams(Params):
    layers: OptionalStrList = Field(default=None, description="material:thickness list, bottom first")
    metal_mm: float = Field(default=0.4, gt=0)
    preg_mm: float = Field(default=0.25, gt=0)
    n_layers: int = Field(default=5, ge=1)
    metal: str = "aluminum"
    plate_xy: FloatPair = config.PLATE_SIZE[:2]


def _parse_layers(items: List[str]) -> List[Tuple[str, float]]:
    layers = []
    for item in items:
        name, sep, thickness = item.partition(":")
        try:
            layers.append((name.strip(), float(thickness)))
        except ValueError:
            raise ConfigError(f"layer must look like 'material:thickness', got '{item}'")
        if not sep:
            raise ConfigError(f"layer must look like 'material:thickness', got '{item}'")
    return layers


def gen_fml(ctx: CommandContext, p: GenFmlParams) -> str:
    def produce(out: Path, run: RunConfig):
        if p.layers:
            layers = _parse_layers(p.layers)
        else:
            layers = glare_layers(p.metal_mm, p.preg_mm, p.n_layers, p.metal)
        try:
            spec = generate_fml_stack(layers, plate_xy=p.plate_xy)
        except ValueError as e:
            raise ConfigError(str(e))
        meta = {"kind": spec.kind, "spec_hash": spec.content_hash(), "layers": len(spec.layers)}
        return _write_spec(out, spec, config.SPHERE_SEGMENTS), meta

    return _register(ctx, "spec", "gen-fml", p, [], produce).id


# ── x-ray ─────────────────────────────────────────────────────────────

class SimulateParams(Params):
    spec: str
    preset: Optional[str] = Field(default=None, description="device class: highq, midq or lowq")
    sod: Optional[float] = Field(default=None, gt=0)
    sdd: Optional[float] = Field(default=None, gt=0)
    pitch: Optional[float] = Field(default=None, gt=0)
    width: Optional[int] = Field(default=None, ge=1)
    height: Optional[int] = Field(default=None, ge=1)
    beam: Literal["cone", "parallel"] = "cone"
    focal_spot: Optional[float] = Field(default=None, ge=0)
    projections: int = Field(default=1, ge=1)
    range_deg: float = Field(default=180.0, gt=0)
    start_deg: float = 0.0
    noise: Optional[float] = Field(default=None, ge=0, description="relative noise sigma")
    noise_kind: Literal["gaussian_relative", "gaussian_full_scale"] = "gaussian_relative"
    bits: Optional[Literal[12, 16]] = None
    segments: int = Field(default=config.SPHERE_SEGMENTS, ge=3)
    png: bool = Field(default=False, description="also write 16-bit PNG counts")


def _geometry(p: SimulateParams) -> Tuple[ProjectionGeometry, float, int]:
    """(geometry, noise sigma, bits) from a preset and explicit overrides."""
    overrides = {k: v for k, v in {"sdd": p.sdd, "pitch": p.pitch, "width": p.width,
                                   "height": p.height}.items() if v is not None}
    overrides["beam"] = p.beam
    if p.preset is None:
        if p.sod is not None:
            overrides["sod"] = p.sod
        geometry = ProjectionGeometry(focal_spot_mm=p.focal_spot or 0.0, **overrides)
        return geometry, p.noise or 0.0, p.bits or config.QUANT_BITS
    try:
        preset = get_preset(p.preset)
    except ValueError as e:
        raise ConfigError(str(e))
    focal = preset.focal_spot_mm if p.focal_spot is None else p.focal_spot
    geometry = preset.geometry(p.sod, focal_spot_mm=focal, **overrides)
    sigma = preset.noise_sigma if p.noise is None else p.noise
    return geometry, sigma, p.bits or preset.bits


def simulate(ctx: CommandContext, p: SimulateParams) -> str:
    spec_entry, spec = load_spec(ctx.ws, ctx.ws.get(p.spec, "spec").id)
    geometry, sigma, bits = _geometry(p)
    acquisition = AcquisitionConfig(count=p.projections, range_deg=p.range_deg,
                                    start_deg=p.start_deg, geometry=geometry)

    def produce(out: Path, run: RunConfig):
        meshes = specimen_meshes(spec, p.segments)
        noise = NoiseModel(kind=p.noise_kind, sigma_rel=sigma, seed=run.seed_for("noise"))
        quant = QuantizationSpec(bits=bits)
        files = []
        angles = acquisition.angles()
        for k, angle in enumerate(angles):
            image = simulate_projection(meshes, geometry.with_angle(angle), threads=ctx.threads,
                                        spec_id=spec_entry.id)
            noisy = add_noise(image, noise, stream=k)
            counts = quantize(noisy, quant)
            stored = dequantize(counts, bits, geometry.pitch, noisy.metadata)
            files.extend(write_image_raw(out / f"proj_{k:04d}.raw", stored))
            if p.png:
                files.append(write_png16(out / f"proj_{k:04d}.png", counts))
            if (k + 1) % 50 == 0:
                logger.info(f"投影进度 {k + 1}/{len(angles)}")
        meta = {"role": "projections", "count": len(angles), "geometry": geometry.model_dump(),
                "noise": noise.model_dump(), "bits": bits, "range_deg": p.range_deg}
        return files, meta

    return _register(ctx, "image-set", "simulate", p, [spec_entry.id], produce).id


# ── reconstruction ────────────────────────────────────────────────────

class ReconParams(Params):
    images: str
    filter: Literal["ramp", "ramp_hann"] = config.FILTER_KIND
    cutoff: float = Field(default=config.FILTER_CUTOFF, gt=0, le=1)
    rows: OptionalIntList = Field(default=None, description="detector rows to reconstruct (default all)")
    nx: Optional[int] = Field(default=None, ge=1)
    nz: Optional[int] = Field(default=None, ge=1)
    epsilon: float = Field(default=config.LOG_EPSILON, gt=0)


def recon(ctx: CommandContext, p: ReconParams) -> str:
    entry = ctx.ws.get(p.images, "image-set")

    def produce(out: Path, run: RunConfig):
        sino = to_sinogram(load_images(ctx.ws, entry.id), p.epsilon)
        grid = ReconGrid.for_sinogram(sino)
        grid = grid.model_copy(update={"nx": p.nx or grid.nx, "nz": p.nz or grid.nz})
        volume = reconstruct_volume(sino, FilterSpec(kind=p.filter, cutoff=p.cutoff), grid=grid,
                                    rows=p.rows, threads=ctx.threads)
        files = list(write_volume(out / "volume.raw", volume))
        png = export_slice_png(out / "slice_y.png", volume, axis="y")
        files.extend([png, png.with_suffix(".json")])
        meta = {"shape": list(volume.values.shape), "voxel": volume.voxel, "filter": p.filter}
        return files, meta

    return _register(ctx, "volume", "recon", p, [entry.id], produce).id


# ── pixel classifier ──────────────────────────────────────────────────

class ExtractSegmentsParams(Params):
    images: str
    count: int = Field(default=config.CNN_SEGMENTS, ge=1)
    mix: FloatPair = config.CNN_MIX
    segment_size: int = Field(default=config.CNN_ARCH[0], ge=4)


def _segments_from(ws: Workspace, image_ids: Sequence[str], count: int, mix: Tuple[float, float],
                   segment_size: int, run: RunConfig) -> List[Segment]:
    """`count` segments spread evenly over every image of the given sets."""
    sources = []
    for image_id in image_ids:
        _, spec = load_spec(ws, image_id)
        sources.extend((image_id, k, image, spec) for k, image in enumerate(load_images(ws, image_id)))
    if not sources:
        raise ConfigError("no projection images to sample segments from")
    shares = [part.size for part in np.array_split(np.arange(count), len(sources))]
    segments = []
    for (image_id, k, image, spec), share in zip(sources, shares):
        if share == 0:
            continue
        segments.extend(extract_training_segments(
            image, image_truth(spec, image.metadata), count=share, mix=mix,
            seed=run.seed_for(f"segments/{image_id}/{k}"), segment_size=segment_size,
            image_id=f"{image_id}/{k}",
        ))
    return segments


def _write_segments(out: Path, segments: List[Segment]) -> List[Path]:
    patches = np.stack([s.patch for s in segments])
    files = list(write_raw(out / "patches.raw", patches, {"count": len(segments)}))
    frame = pd.DataFrame([{"image_id": s.image_id, "x": s.x, "y": s.y, "label": s.label} for s in segments],
                         columns=["image_id", "x", "y", "label"])
    frame.to_csv(out / "segments.csv", index=False)
    files.append(out / "segments.csv")
    return files


def load_segments(ws: Workspace, artifact: str) -> List[Segment]:
    entry = ws.get(artifact, "image-set")
    if entry.meta.get("role") != "segments":
        raise ConfigError(f"{artifact} is not a segment set")
    patches, _ = read_raw(ws.file(entry, "patches.raw"))
    frame = pd.read_csv(ws.file(entry, "segments.csv"), dtype={"image_id": str})
    return [Segment(patch=patches[i], label=int(r.label), image_id=r.image_id, x=int(r.x), y=int(r.y))
            for i, r in enumerate(frame.itertuples(index=False))]


def extract_segments(ctx: CommandContext, p: ExtractSegmentsParams) -> str:
    entry = ctx.ws.get(p.images, "image-set")

    def produce(out: Path, run: RunConfig):
        segments = _segments_from(ctx.ws, [entry.id], p.count, p.mix, p.segment_size, run)
        meta = {"role": "segments", "count": len(segments), "segment_size": p.segment_size,
                "pores": int(sum(s.label for s in segments))}
        return _write_segments(out, segments), meta

    return _register(ctx, "image-set", "extract-segments", p, [entry.id], produce).id


class TrainCnnParams(Params):
    images: OptionalStrList = Field(default=None, description="image-set ids to sample segments from")
    segment_set: Optional[str] = None
    arch: str = DEFAULT_ARCH
    segments: int = Field(default=config.CNN_SEGMENTS, ge=2)
    mix: FloatPair = config.CNN_MIX
    epochs: int = Field(default=config.CNN_EPOCHS, ge=1)
    learning_rate: float = Field(default=config.CNN_LEARNING_RATE, ge=0)
    batch_size: int = Field(default=config.CNN_BATCH_SIZE, ge=1)
    momentum: float = Field(default=0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def _one_source(self):
        if bool(self.images) == bool(self.segment_set):
            raise ValueError("give exactly one of --images or --segment-set")
        return self


def train_cnn(ctx: CommandContext, p: TrainCnnParams) -> str:
    s, a, b = parse_arch(p.arch)
    inputs = [ctx.ws.get(p.segment_set, "image-set").id] if p.segment_set else \
        [ctx.ws.get(i, "image-set").id for i in p.images]

    def produce(out: Path, run: RunConfig):
        if p.segment_set:
            segments = load_segments(ctx.ws, p.segment_set)
        else:
            segments = _segments_from(ctx.ws, inputs, p.segments, p.mix, s, run)
        cfg = TrainConfig(learning_rate=p.learning_rate, epochs=p.epochs, batch_size=p.batch_size,
                          momentum=p.momentum, mix=p.mix, seed=run.seed_for("shuffle"))
        model, history = train_sgd(build(s, a, b, seed=run.seed_for("init")), segments, cfg)
        files = [save_cnn(out / "model.rsmd", model, provenance={"run": run.identity()}),
                 history.to_csv(out / "loss.csv")]
        meta = {"arch": model.arch, "segments": len(segments), "final_loss": history.final_loss,
                "train_accuracy": history.final_accuracy}
        return files, meta

    return _register(ctx, "model", "train-cnn", p, inputs, produce).id


class ClassifyParams(Params):
    model: str
    images: str


def _sum_rates(preds: List[np.ndarray], truths: List[np.ndarray]) -> PixelRates:
    return evaluate_pixels(np.stack(preds), np.stack(truths))


def classify(ctx: CommandContext, p: ClassifyParams) -> str:
    model_entry = ctx.ws.get(p.model, "model")
    image_entry = ctx.ws.get(p.images, "image-set")

    def produce(out: Path, run: RunConfig):
        model = load_cnn(ctx.ws.file(model_entry, "model.rsmd"))
        images = load_images(ctx.ws, image_entry.id)
        files, classes = [], []
        for k, image in enumerate(images):
            fmap = sliding_window_classify(model, image, threads=ctx.threads)
            files.extend(write_raw(out / f"scores_{k:04d}.raw", fmap.scores, {"metadata": fmap.metadata}))
            files.append(write_gray8(out / f"scores_{k:04d}.png", fmap.scores, 0.0, 1.0))
            classes.append(fmap.classes.astype(bool))
        meta: Dict[str, Any] = {"role": "scores", "count": len(images), "arch": model.arch}

        _, spec = load_spec(ctx.ws, image_entry.id)
        if spec.kind == "pore_plate" and not spec.defects:
            rates = _sum_rates(classes, [np.zeros_like(c) for c in classes])
            files.append(_write_json(out / "rates.json", rates.model_dump()))
            meta["fp_rate"] = rates.fp_rate
            logger.info(f"无缺陷试件误报率: {rates.fp_rate:.4f}")
        return files, meta

    return _register(ctx, "feature-map", "classify", p, [model_entry.id, image_entry.id], produce).id


# ── feature extraction ────────────────────────────────────────────────

class EvalParams(Params):
    features: str
    tau: float = Field(default=config.THRESHOLD_TAU, ge=0, le=1)


def evaluate(ctx: CommandContext, p: EvalParams) -> str:
    entry = ctx.ws.get(p.features, "feature-map")

    def produce(out: Path, run: RunConfig):
        _, spec = load_spec(ctx.ws, entry.id)
        preds, truths = [], []
        for fmap in load_feature_maps(ctx.ws, entry.id):
            preds.append(threshold_map(fmap, p.tau)[0])
            truths.append(image_truth(spec, fmap.metadata["source"]))
        overall = _sum_rates(preds, truths)
        per_image = [evaluate_pixels(a, b).model_dump() for a, b in zip(preds, truths)]
        path = _write_json(out / "rates.json", {"overall": overall.model_dump(), "per_image": per_image,
                                                "tau": p.tau})
        logger.info(f"像素评估: TP 率 {overall.tp_rate}, FN 率 {overall.fn_rate}, FP 率 {overall.fp_rate}")
        return [path], overall.model_dump()

    return _register(ctx, "report", "eval", p, [entry.id], produce).id


class ClusterParams(Params):
    features: str
    index: int = Field(default=0, ge=0, description="image within the feature map")
    tau: float = Field(default=config.THRESHOLD_TAU, ge=0, le=1)
    eps: float = Field(default=config.DBSCAN_EPS, gt=0)
    min_pts: int = Field(default=config.DBSCAN_MIN_PTS, ge=1)


def _feature_map_at(ws: Workspace, artifact: str, index: int) -> FeatureMap:
    maps = load_feature_maps(ws, artifact)
    if index >= len(maps):
        raise ShapeError(f"{artifact} holds {len(maps)} maps, no index {index}")
    return maps[index]


def cluster(ctx: CommandContext, p: ClusterParams) -> str:
    entry = ctx.ws.get(p.features, "feature-map")

    def produce(out: Path, run: RunConfig):
        _, points = threshold_map(_feature_map_at(ctx.ws, entry.id, p.index), p.tau)
        clusters = dbscan(points, p.eps, p.min_pts)
        frame = pd.DataFrame({"x": clusters.points[:, 0], "y": clusters.points[:, 1],
                              "cluster": clusters.labels})
        frame.to_csv(out / "clusters.csv", index=False, float_format=config.CSV_FLOAT_FORMAT)
        meta = {"role": "clusters", "index": p.index, "eps": p.eps, "min_pts": p.min_pts,
                "n_clusters": clusters.n_clusters, "n_noise": clusters.n_noise}
        return [out / "clusters.csv"], meta

    return _register(ctx, "feature-map", "cluster", p, [entry.id], produce).id


class FitParams(Params):
    clusters: str
    refine: bool = Field(default=config.ELLIPSE_REFINE, description="least-squares boundary refinement")


def fit(ctx: CommandContext, p: FitParams) -> str:
    entry = ctx.ws.get(p.clusters, "feature-map")
    if entry.meta.get("role") != "clusters":
        raise ConfigError(f"{p.clusters} is not a cluster set")

    def produce(out: Path, run: RunConfig):
        frame = pd.read_csv(ctx.ws.file(entry, "clusters.csv"))
        clusters = ClusterSet(points=frame[["x", "y"]].to_numpy(dtype=np.float64),
                              labels=frame["cluster"].to_numpy(dtype=np.int64),
                              eps=entry.meta["eps"], min_pts=entry.meta["min_pts"])
        fmap = _feature_map_at(ctx.ws, entry.parents[0], entry.meta["index"])
        report = pore_report(clusters, fit_clusters(clusters, p.refine), fmap)
        return [write_pore_report(out / "pores.csv", report)], {"pores": len(report)}

    return _register(ctx, "report", "fit", p, [entry.id], produce).id


class ReportParams(ClusterParams):
    refine: bool = config.ELLIPSE_REFINE


def report(ctx: CommandContext, p: ReportParams) -> str:
    entry = ctx.ws.get(p.features, "feature-map")

    def produce(out: Path, run: RunConfig):
        fmap = _feature_map_at(ctx.ws, entry.id, p.index)
        clusters, _, frame = characterize(fmap, p.tau, p.eps, p.min_pts, p.refine)
        summary = {"pores": len(frame), "points": int(clusters.points.shape[0]),
                   "noise_points": clusters.n_noise,
                   "mean_area": float(np.pi * (frame["a"] * frame["b"]).mean()) if len(frame) else None}
        files = [write_pore_report(out / "pores.csv", frame), _write_json(out / "summary.json", summary)]
        return files, summary

    return _register(ctx, "report", "report", p, [entry.id], produce).id


# ── z-profiles ────────────────────────────────────────────────────────

class ZsliceParams(Params):
    volume: str
    window: int = Field(default=config.ZPROFILE_WINDOW, ge=1)
    stride: Optional[int] = Field(default=None, ge=1)


def zslice(ctx: CommandContext, p: ZsliceParams) -> str:
    entry, volume = load_volume(ctx.ws, p.volume)

    def produce(out: Path, run: RunConfig):
        grid = extract_zprofiles(volume, p.window, p.stride)
        files = list(write_raw(out / "profiles.raw", grid.values,
                               {"window": grid.window, "stride": grid.stride}))
        return files, {"role": "zprofiles", "grid": list(grid.shape), "length": grid.length,
                       "window": grid.window, "stride": grid.stride}

    return _register(ctx, "feature-map", "zslice", p, [entry.id], produce).id


class TrainAeParams(Params):
    profiles: str
    kind: Literal["conv", "lstm"] = config.AE_KIND
    channels: int = Field(default=config.AE_CHANNELS, ge=1)
    hidden: int = Field(default=config.AE_LSTM_HIDDEN, ge=1)
    epochs: int = Field(default=config.AE_EPOCHS, ge=1)
    learning_rate: float = Field(default=config.AE_LEARNING_RATE, ge=0)
    batch_size: int = Field(default=config.AE_BATCH_SIZE, ge=1)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    percentile: float = Field(default=config.AE_PERCENTILE, gt=0, le=100)


def train_autoencoder(ctx: CommandContext, p: TrainAeParams) -> str:
    grid = load_profiles(ctx.ws, p.profiles)
    inputs = [ctx.ws.get(p.profiles).id]

    def produce(out: Path, run: RunConfig):
        size = {"channels": p.channels} if p.kind == "conv" else {"hidden": p.hidden}
        model = create_autoencoder(p.kind, grid.length, seed=run.seed_for("init"), **size)
        cfg = AETrainConfig(learning_rate=p.learning_rate, epochs=p.epochs, batch_size=p.batch_size,
                            momentum=p.momentum, seed=run.seed_for("shuffle"))
        model, history = train_ae(model, grid.flat(), cfg)
        tau = calibrate_threshold(model, grid.flat(), p.percentile)
        model.metadata.update({"tau": tau, "percentile": p.percentile,
                               "window": grid.window, "stride": grid.stride})
        logger.info(f"自编码器阈值 (第 {p.percentile} 百分位): {tau:.6g}")
        files = [save_ae(out / "model.rsmd", model, provenance={"run": run.identity()}),
                 history.to_csv(out / "loss.csv")]
        return files, {"ae_kind": p.kind, "tau": tau, "length": grid.length, "final_loss": history.final_loss}

    return _register(ctx, "model", "train-ae", p, inputs, produce).id


class AnomalyParams(Params):
    model: str
    volume: str
    window: Optional[int] = Field(default=None, ge=1, description="default: the training window")
    stride: Optional[int] = Field(default=None, ge=1)
    tau: Optional[float] = Field(default=None, ge=0, description="default: the calibrated threshold")


def anomaly(ctx: CommandContext, p: AnomalyParams) -> str:
    model_entry = ctx.ws.get(p.model, "model")
    volume_entry, volume = load_volume(ctx.ws, p.volume)

    def produce(out: Path, run: RunConfig):
        model = load_ae(ctx.ws.file(model_entry, "model.rsmd"))
        window = p.window or model.metadata.get("window", config.ZPROFILE_WINDOW)
        stride = p.stride or model.metadata.get("stride")
        tau = p.tau if p.tau is not None else model.metadata.get("tau", 0.0)
        amap = anomaly_map(model, volume, window, stride, tau)
        raw, side = write_anomaly_map(out / "anomaly.raw", amap)
        meta: Dict[str, Any] = {"role": "anomaly", "tau": tau, "flagged": int(amap.flags.sum()),
                                "grid": list(amap.scores.shape)}
        truth = load_truth(ctx.ws, volume_entry)
        if truth is not None:
            labels = grid_truth(truth, amap.window, amap.stride)
            if labels.any() and not labels.all():
                meta["auc"] = detection_auc(amap.scores, labels)
                logger.info(f"异常检测 AUC: {meta['auc']:.4f}")
        return [raw, side, raw.with_suffix(".png")], meta

    return _register(ctx, "feature-map", "anomaly", p, [model_entry.id, volume_entry.id], produce).id


class SynthVolumeParams(Params):
    spec: str
    region: Annotated[Tuple[int, int, int, int], Csv] = Field(
        default=(16, 16, 32, 32), description="damage box x0,y0,x1,y1 in voxels")
    stretch: float = Field(default=1.2, gt=0)
    nx: int = Field(default=48, ge=1)
    ny: int = Field(default=48, ge=1)
    nz: int = Field(default=64, ge=1)
    noise: float = Field(default=config.DAMAGE_NOISE, ge=0)
    band: Annotated[Optional[Tuple[float, float]], Csv] = None


def synth_volume(ctx: CommandContext, p: SynthVolumeParams) -> str:
    spec_entry, spec = load_spec(ctx.ws, ctx.ws.get(p.spec, "spec").id)
    x0, y0, x1, y1 = p.region
    region = DamageRegion(x0=x0, y0=y0, x1=x1, y1=y1)

    def produce(out: Path, run: RunConfig):
        volume, truth = synth_damaged_volume(spec, region, p.stretch, seed=run.seed_for("noise"),
                                             nx=p.nx, ny=p.ny, nz=p.nz, noise=p.noise, band=p.band)
        files = list(write_volume(out / "volume.raw", volume))
        files.extend(write_raw(out / "truth.raw", truth.astype(np.float32), {"region": region.model_dump()}))
        return files, {"shape": list(volume.values.shape), "voxel": volume.voxel, "stretch": p.stretch}

    return _register(ctx, "volume", "synth-volume", p, [spec_entry.id], produce).id


class TrainZcnnParams(Params):
    volumes: IdList
    window: int = Field(default=config.ZPROFILE_WINDOW, ge=1)
    stride: Optional[int] = Field(default=None, ge=1)
    filters: IntPair = config.ZCNN_FILTERS
    epochs: int = Field(default=40, ge=1)
    learning_rate: float = Field(default=config.CNN_LEARNING_RATE, ge=0)
    batch_size: int = Field(default=config.CNN_BATCH_SIZE, ge=1)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    holdout: float = Field(default=0.2, ge=0, lt=1)


def train_profile_cnn(ctx: CommandContext, p: TrainZcnnParams) -> str:
    loaded = [load_volume(ctx.ws, v) for v in p.volumes]

    def produce(out: Path, run: RunConfig):
        profiles, labels = [], []
        for entry, volume in loaded:
            truth = load_truth(ctx.ws, entry)
            if truth is None:
                raise ConfigError(f"{entry.id} has no damage truth map")
            grid = extract_zprofiles(volume, p.window, p.stride)
            profiles.append(grid.flat())
            labels.append(grid_truth(truth, grid.window, grid.stride).ravel().astype(np.int64))
        lengths = {x.shape[1] for x in profiles}
        if len(lengths) > 1:
            raise ShapeError(f"volumes give profiles of different lengths {sorted(lengths)}")
        x, y = np.concatenate(profiles), np.concatenate(labels)
        model = build_zcnn(x.shape[1], p.filters[0], p.filters[1], seed=run.seed_for("init"))
        cfg = ZCnnTrainConfig(learning_rate=p.learning_rate, epochs=p.epochs, batch_size=p.batch_size,
                              momentum=p.momentum, holdout=p.holdout, seed=run.seed_for("shuffle"))
        model, history = train_zcnn(model, x, y, cfg)
        files = [save_zcnn(out / "model.rsmd", model, provenance={"run": run.identity()}),
                 history.to_csv(out / "loss.csv")]
        return files, {"length": model.length, "held_out_accuracy": model.metadata["held_out_accuracy"],
                       "train_accuracy": history.final_accuracy}

    return _register(ctx, "model", "train-zcnn", p, [e.id for e, _ in loaded], produce).id


# ── catalog ───────────────────────────────────────────────────────────

class VerifyParams(Params):
    pass


def verify(ctx: CommandContext, p: VerifyParams) -> str:
    problems = ctx.ws.verify()
    if problems:
        for problem in problems:
            logger.error(problem)
        raise ManifestError(f"{len(problems)} provenance problems in {ctx.ws.root}")
    logger.info(f"工作区校验通过: {len(ctx.ws.entries())} 个工件")
    return ""


class ListParams(Params):
    kind: Optional[str] = None


def list_artifacts(ctx: CommandContext, p: ListParams) -> str:
    return "\n".join(e.id for e in ctx.ws.entries(p.kind))
