"""
radisynth Acceptance Benchmark Runner.
Runs the checks listed in tasks.json against analytic oracles and the
end-to-end experiment, timing each and producing a JSON report.
"""
import json
import logging
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional
from pathlib import Path

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from classifier.pixel_cnn import build
from features.clustering import dbscan
from features.ellipse import fit_ellipse, normalize_angle
from features.threshold import mask_to_points
from nn.gradcheck import grad_check
from pipeline.commands import CommandContext
from pipeline.experiment import ExperimentParams, run_experiment
from pipeline.workspace import Workspace
from recon.fbp import ReconGrid, fbp_slice
from scene.generator import generate_fml_stack, generate_pore_plate, glare_layers
from scene.mesh import box_mesh, sphere_mesh
from xray.geometry import ProjectionGeometry
from xray.projector import simulate_specimen
from xray.raytrace import ray_path_lengths
from zprofile.anomaly import anomaly_map, calibrate_threshold, detection_auc, grid_truth
from zprofile.autoencoder import AETrainConfig, build_conv_ae, build_lstm_ae, train_ae
from zprofile.damage import DamageRegion, synth_damaged_volume
from zprofile.profiles import extract_zprofiles
from zprofile.zcnn import build_zcnn

logger = logging.getLogger(__name__)


# ── Data classes ──────────────────────────────────────────────────────

@dataclass
class CheckScore:
    """Score for a single acceptance check."""
    check_id: str
    description: str
    value: Optional[float]
    threshold: float
    goal: str                   # "max": value <= threshold, "min": value >= threshold
    seconds: float
    error: str = ""

    @property
    def passed(self) -> bool:
        if self.value is None or self.error:
            return False
        return self.value <= self.threshold if self.goal == "max" else self.value >= self.threshold


@dataclass
class BenchmarkReport:
    """Full benchmark report for one run."""
    label: str
    scores: List[CheckScore] = field(default_factory=list)
    timestamp: float = field(default_factory=time.time)

    @property
    def pass_rate(self) -> float:
        if not self.scores:
            return 0.0
        return sum(1 for s in self.scores if s.passed) / len(self.scores)

    @property
    def total_time(self) -> float:
        return sum(s.seconds for s in self.scores)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "timestamp": self.timestamp,
            "summary": {
                "pass_rate": round(self.pass_rate, 4),
                "total_time_s": round(self.total_time, 2),
                "checks": len(self.scores),
            },
            "scores": [
                {
                    "check_id": s.check_id,
                    "description": s.description,
                    "value": s.value,
                    "threshold": s.threshold,
                    "goal": s.goal,
                    "passed": s.passed,
                    "seconds": round(s.seconds, 2),
                    "error": s.error,
                }
                for s in self.scores
            ],
        }


# ── Oracles ───────────────────────────────────────────────────────────

def disk_sinogram(n_angles: int, width: int, spacing: float, radius: float, mu: float) -> np.ndarray:
    """Line integrals of a centered uniform disk: 2μ·sqrt(r² − s²)."""
    s = (np.arange(width) - (width - 1) / 2.0) * spacing
    row = 2.0 * mu * np.sqrt(np.clip(radius ** 2 - s ** 2, 0.0, None))
    return np.tile(row, (n_angles, 1))


def rasterize_ellipse(a: float, b: float, theta_deg: float, size: int = 96) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    t = np.radians(theta_deg)
    u = np.cos(t) * (xx - c) + np.sin(t) * (yy - c)
    v = -np.sin(t) * (xx - c) + np.cos(t) * (yy - c)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def brute_force_dbscan(points: np.ndarray, eps: float, min_pts: int) -> List[frozenset]:
    """O(n²) density reachability: clusters as sets of point indices."""
    dist = np.linalg.norm(points[:, None] - points[None], axis=-1)
    neighbours = dist <= eps
    core = neighbours.sum(axis=1) >= min_pts
    label = np.full(len(points), -1)
    current = 0
    for i in np.flatnonzero(core):
        if label[i] != -1:
            continue
        stack = [i]
        label[i] = current
        while stack:
            j = stack.pop()
            if not core[j]:
                continue
            for k in np.flatnonzero(neighbours[j]):
                if label[k] == -1:
                    label[k] = current
                    stack.append(k)
        current += 1
    return [frozenset(np.flatnonzero(label == k).tolist()) for k in range(current)]


# ── Checks ────────────────────────────────────────────────────────────

def check_beer_lambert() -> float:
    mu = 0.05
    slab = box_mesh((50.0, 50.0, 4.0))
    length = ray_path_lengths((0.0, 0.0, -20.0), (0.0, 0.0, 1.0), [slab])[0]
    return abs(np.exp(-mu * length) / np.exp(-0.2) - 1.0)


def check_mesh_convergence() -> float:
    offset, r = 0.3, 1.0
    chord = 2.0 * np.sqrt(r ** 2 - offset ** 2)
    mesh = sphere_mesh(r, 80)
    length = ray_path_lengths((offset, 0.0, -5.0), (0.0, 0.0, 1.0), [mesh])[0]
    return abs(length - chord) / chord


def check_fbp_phantom() -> float:
    width, n_angles, spacing, mu = 256, 400, 1.0, 0.05
    radius = 0.3 * width * spacing
    angles = np.arange(n_angles) * 180.0 / n_angles
    image = fbp_slice(disk_sinogram(n_angles, width, spacing, radius, mu), angles,
                      ReconGrid(nx=width, nz=width, voxel=spacing), spacing)
    c = (width - 1) / 2.0
    zz, xx = np.mgrid[0:width, 0:width]
    inside = np.hypot(xx - c, zz - c) * spacing <= 0.8 * radius
    return abs(image[inside].mean() / mu - 1.0)


def check_gradients() -> float:
    rng = np.random.default_rng(0)
    worst = 0.0
    cnn = build(8, 2, 3, seed=1)
    x = rng.uniform(0, 1, (4, 1, 8, 8))
    worst = max(worst, grad_check(cnn.network, "cross_entropy", x, np.array([0, 1, 1, 0]), fraction=0.2).max_rel_error)
    zcnn = build_zcnn(8, 2, 2, seed=2)
    z = rng.normal(size=(4, 1, 8))
    worst = max(worst, grad_check(zcnn.network, "cross_entropy", z, np.array([1, 0, 1, 0]), fraction=0.2).max_rel_error)
    for ae in (build_conv_ae(8, channels=2, seed=3), build_lstm_ae(6, hidden=3, seed=4)):
        p = rng.normal(size=(3, 1, ae.padded_length))
        worst = max(worst, grad_check(ae.network, "mse", p, p, fraction=0.2).max_rel_error)
    return worst


def check_dbscan_oracle() -> float:
    mismatches = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        points = rng.uniform(0, 20, (int(rng.integers(1, 201)), 2))
        got = set(dbscan(points, 1.5, 4).partition())
        if got != set(brute_force_dbscan(points, 1.5, 4)):
            mismatches += 1
    return float(mismatches)


def _ellipse_errors():
    axes, angles = 0.0, 0.0
    for ratio in (1, 2, 3):
        for theta in (0.0, 30.0, 60.0):
            a = 24.0
            fit = fit_ellipse(mask_to_points(rasterize_ellipse(a, a / ratio, theta)))
            axes = max(axes, abs(fit.a / a - 1.0), abs(fit.b / (a / ratio) - 1.0))
            if ratio > 1:
                d = abs(normalize_angle(fit.theta_deg - theta))
                angles = max(angles, min(d, 180.0 - d))
    return axes, angles


def check_ellipse_axes() -> float:
    return _ellipse_errors()[0]


def check_ellipse_angle() -> float:
    return _ellipse_errors()[1]


def check_zprofile_auc() -> float:
    spec = generate_fml_stack(glare_layers())
    region = DamageRegion(x0=16, y0=16, x1=32, y1=32)
    baseline, _ = synth_damaged_volume(spec, region, stretch=1.0, seed=1)
    damaged, truth = synth_damaged_volume(spec, region, stretch=1.2, seed=2)
    grid = extract_zprofiles(baseline)
    model, _ = train_ae(build_conv_ae(grid.length, seed=0), grid.flat(), AETrainConfig(seed=0))
    tau = calibrate_threshold(model, grid.flat())
    amap = anomaly_map(model, damaged, tau=tau)
    return detection_auc(amap.scores, grid_truth(truth, amap.window, amap.stride))


def check_threaded_projection() -> float:
    spec = generate_pore_plate(plate_size=(20.0, 20.0, 4.0), count=10, seed=3)
    geometry = ProjectionGeometry(width=96, height=96)
    single = simulate_specimen(spec, geometry, threads=1).values
    multi = simulate_specimen(spec, geometry, threads=4).values
    return 0.0 if np.array_equal(single, multi) else 1.0


_experiment_cache: Dict[str, Dict[str, Any]] = {}


def _experiment(label: str = "first") -> Dict[str, Any]:
    if label not in _experiment_cache:
        root = Path(tempfile.mkdtemp(prefix=f"radisynth-{label}-"))
        ctx = CommandContext(Workspace(root), seed=config.DEFAULT_SEED, threads=1)
        report_id = run_experiment(ctx, ExperimentParams())
        path = ctx.ws.file(ctx.ws.get(report_id), "report.json")
        _experiment_cache[label] = {"report": json.loads(path.read_text(encoding="utf-8")),
                                    "bytes": path.read_bytes()}
    return _experiment_cache[label]


def check_experiment_tp() -> float:
    return _experiment()["report"]["held_out"]["tp_rate"]


def check_experiment_fn() -> float:
    return _experiment()["report"]["held_out"]["fn_rate"]


def check_fp_zero_noise() -> float:
    return _experiment()["report"]["fp_probe"]["zero_noise"]


def check_fp_noise_sensitivity() -> float:
    probe = _experiment()["report"]["fp_probe"]
    return probe["noisy"] - probe["zero_noise"]


def check_noise_ablation() -> float:
    report = _experiment()["report"]
    return report["ablation"]["zero_noise_held_out"]["tp_rate"] - report["held_out"]["tp_rate"]


def check_report_determinism() -> float:
    return 0.0 if _experiment("first")["bytes"] == _experiment("rerun")["bytes"] else 1.0


CHECK_REGISTRY: Dict[str, Callable[[], float]] = {
    "beer_lambert": check_beer_lambert,
    "mesh_convergence": check_mesh_convergence,
    "fbp_phantom": check_fbp_phantom,
    "gradients": check_gradients,
    "dbscan_oracle": check_dbscan_oracle,
    "ellipse_axes": check_ellipse_axes,
    "ellipse_angle": check_ellipse_angle,
    "zprofile_auc": check_zprofile_auc,
    "threaded_projection": check_threaded_projection,
    "experiment_tp_rate": check_experiment_tp,
    "experiment_fn_rate": check_experiment_fn,
    "fp_probe_zero_noise": check_fp_zero_noise,
    "fp_probe_noise_sensitivity": check_fp_noise_sensitivity,
    "noise_ablation_ordering": check_noise_ablation,
    "report_determinism": check_report_determinism,
}


# ── Benchmark runner ──────────────────────────────────────────────────

class AcceptanceBenchmark:
    """Run acceptance checks and produce scores."""

    def __init__(self, tasks_path: Optional[str] = None):
        if tasks_path is None:
            tasks_path = str(Path(__file__).parent / "tasks.json")
        with open(tasks_path, "r", encoding="utf-8") as f:
            self.tasks: List[Dict[str, Any]] = json.load(f)

    def run_task(self, task_def: Dict[str, Any]) -> CheckScore:
        check = CHECK_REGISTRY.get(task_def["id"])
        start = time.time()
        value, error = None, ""
        if check is None:
            error = f"unknown check {task_def['id']}"
        else:
            try:
                value = float(check())
            except Exception as e:
                logger.exception(f"检查 {task_def['id']} 出错")
                error = f"{type(e).__name__}: {e}"
        return CheckScore(
            check_id=task_def["id"],
            description=task_def["description"],
            value=value,
            threshold=float(task_def["threshold"]),
            goal=task_def.get("goal", "max"),
            seconds=time.time() - start,
            error=error,
        )

    def run_all(self, label: str = "default", task_ids: Optional[List[str]] = None,
                include_slow: bool = False) -> BenchmarkReport:
        report = BenchmarkReport(label=label)
        tasks_to_run = [t for t in self.tasks if include_slow or not t.get("slow", False)]
        if task_ids:
            tasks_to_run = [t for t in self.tasks if t["id"] in task_ids]
        for task_def in tasks_to_run:
            logger.info(f"运行检查: {task_def['id']} - {task_def['description']}")
            score = self.run_task(task_def)
            report.scores.append(score)
            logger.info(f"  结果: {'✅ PASS' if score.passed else '❌ FAIL'}  值: {score.value}"
                        f"  阈值: {score.threshold}  用时: {score.seconds:.1f}s")
        return report


# ── CLI entry point ──────────────────────────────────────────────────

if __name__ == "__main__":
    import argparse

    from pipeline.cli import configure_logging

    parser = argparse.ArgumentParser(description="radisynth acceptance benchmark")
    parser.add_argument("--label", default="default", help="Report label")
    parser.add_argument("--tasks", nargs="*", default=None, help="Check IDs to run (default: all fast checks)")
    parser.add_argument("--slow", action="store_true", help="Include slow end-to-end checks")
    parser.add_argument("--output", default=None, help="JSON output path")
    args = parser.parse_args()

    configure_logging()
    report = AcceptanceBenchmark().run_all(label=args.label, task_ids=args.tasks, include_slow=args.slow)
    logger.info(f"通过率: {report.pass_rate:.1%}, 总用时 {report.total_time:.1f}s")

    out_path = args.output or str(Path(__file__).parent / f"report_{args.label}.json")
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
    logger.info(f"报告已保存: {out_path}")
