import json

import pytest

from errors import (ArtifactNotFoundError, ConfigError, ManifestError, PackingError, StageError)
from pipeline import COMMAND_REGISTRY, get_command
from pipeline.cli import exit_code, load_config_file
from pipeline.cli import main as cli_main
from pipeline.run_config import RunConfig, derive_seed
from pipeline.workflow import BaseWorkflow, WorkflowStep
from pipeline.workspace import ManifestEntry, Workspace, artifact_id

SMALL_PLATE = ["--pores", "4", "--plate", "12,12,4", "--segments", "8"]
SMALL_DETECTOR = ["--beam", "parallel", "--width", "48", "--height", "48", "--pitch", "0.6", "--segments", "8"]


def _run(capsys, ws, *args):
    """(exit code, last stdout line) of one CLI invocation."""
    code = cli_main(["--workspace", str(ws), *args])
    lines = capsys.readouterr().out.strip().splitlines()
    return code, (lines[-1] if lines else "")


def _ok(capsys, ws, *args) -> str:
    code, out = _run(capsys, ws, *args)
    assert code == 0, args
    return out


# ── workspace ──

def _touch(ws: Workspace, kind: str, name: str) -> ManifestEntry:
    out = ws.artifact_dir(kind, name)
    (out / "data.txt").write_text(name, encoding="utf-8")
    return ManifestEntry(id=name, kind=kind, digest="0" * 64, paths=[ws.relative(out / "data.txt")])


def test_commit_and_lineage(tmp_path):
    ws = Workspace(tmp_path)
    spec = ws.commit(_touch(ws, "spec", "spec-a"))
    image = _touch(ws, "image-set", "image-a").model_copy(update={"parents": [spec.id]})
    ws.commit(image)
    assert [e.id for e in ws.lineage("image-a")] == ["image-a", "spec-a"]
    assert ws.get("image-a", "image-set").created
    assert ws.verify() == []


def test_commit_refuses_missing_files_and_parents(tmp_path):
    ws = Workspace(tmp_path)
    ghost = ManifestEntry(id="spec-x", kind="spec", digest="d", paths=["spec/spec-x/nothing.json"])
    with pytest.raises(ManifestError):
        ws.commit(ghost)
    orphan = _touch(ws, "volume", "volume-x").model_copy(update={"parents": ["spec-missing"]})
    with pytest.raises(ManifestError):
        ws.commit(orphan)
    assert not ws.manifest_path.exists()


def test_lookup_errors(tmp_path):
    ws = Workspace(tmp_path)
    ws.commit(_touch(ws, "spec", "spec-a"))
    with pytest.raises(ArtifactNotFoundError):
        ws.get("volume-zzz")
    with pytest.raises(ConfigError):
        ws.get("spec-a", "volume")
    with pytest.raises(ValueError, match="image-set"):
        ws.artifact_dir("photo", "x")


def test_corrupt_manifest(tmp_path):
    ws = Workspace(tmp_path)
    ws.manifest_path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ManifestError):
        ws.entries()


def test_deleted_file_breaks_cache_and_verify(tmp_path):
    ws = Workspace(tmp_path)
    entry = _touch(ws, "spec", artifact_id("spec", "ab" * 32)).model_copy(update={"digest": "ab" * 32})
    ws.commit(entry)
    assert ws.cached("spec", "ab" * 32) is not None
    (ws.root / entry.paths[0]).unlink()
    assert ws.cached("spec", "ab" * 32) is None
    assert "missing file" in ws.verify()[0]


def test_report_must_reach_a_spec(tmp_path):
    ws = Workspace(tmp_path)
    ws.commit(_touch(ws, "report", "report-a"))
    assert "specimen spec" in ws.verify()[0]


# ── run configs ──

def test_derive_seed_is_stable_and_labelled():
    assert derive_seed(7, "noise") == derive_seed(7, "noise")
    assert derive_seed(7, "noise") != derive_seed(7, "init")
    assert derive_seed(7, "noise") != derive_seed(8, "noise")


def test_digest_ignores_threads():
    a = RunConfig(command="recon", seed=1, threads=1, params={"filter": "ramp"})
    b = RunConfig(command="recon", seed=1, threads=8, params={"filter": "ramp"})
    c = RunConfig(command="recon", seed=2, threads=1, params={"filter": "ramp"})
    assert a.digest() == b.digest() != c.digest()
    assert json.loads(a.to_json())["threads"] == 1


# ── workflow ──

class _Flaky(BaseWorkflow):
    name = "flaky"

    def __init__(self, failures, strategy):
        self.failures = failures
        self.strategy = strategy
        self.calls = 0

    def _unstable(self, context):
        self.calls += 1
        if self.calls <= self.failures:
            raise PackingError("plate full", 3, 5)
        return "done"

    def get_steps(self):
        return [WorkflowStep("first", lambda ctx: 1),
                WorkflowStep("unstable", self._unstable, on_failure=self.strategy, max_retries=2),
                WorkflowStep("last", lambda ctx: ctx["first"] + 1)]


def test_retry_recovers():
    flow = _Flaky(failures=2, strategy="retry")
    result = flow.run()
    assert result.completed == ["first", "unstable", "last"]
    assert result.context["unstable"] == "done" and flow.calls == 3


def test_skip_continues():
    result = _Flaky(failures=1, strategy="skip").run()
    assert result.skipped == ["unstable"]
    assert result.context["last"] == 2


def test_abort_raises_stage_error_with_cause():
    with pytest.raises(StageError) as exc:
        _Flaky(failures=1, strategy="abort").run()
    assert exc.value.stage == "unstable"
    assert isinstance(exc.value.__cause__, PackingError)


def test_unknown_failure_strategy():
    with pytest.raises(ValueError, match="retry"):
        WorkflowStep("x", lambda ctx: None, on_failure="ignore")


# ── exit codes ──

def test_exit_code_follows_the_cause():
    try:
        raise StageError("plates", "bad") from ConfigError("bad margin")
    except StageError as e:
        assert exit_code(e) == 1
    try:
        raise StageError("plates", "full") from PackingError("plate full", 3, 5)
    except StageError as e:
        assert exit_code(e) == 2
    assert exit_code(ConfigError("x")) == 1
    assert exit_code(RuntimeError("x")) == 2


def test_command_registry():
    assert {"gen-plate", "simulate", "recon", "train-cnn", "classify", "report", "experiment"} <= set(COMMAND_REGISTRY)
    with pytest.raises(ValueError, match="gen-plate"):
        get_command("render")


# ── CLI ──

def test_gen_plate_is_deterministic_and_cached(tmp_path, capsys):
    ws = tmp_path / "ws"
    first = _ok(capsys, ws, "--seed", "3", "gen-plate", *SMALL_PLATE)
    again = _ok(capsys, ws, "--seed", "3", "gen-plate", *SMALL_PLATE)
    other = _ok(capsys, ws, "--seed", "4", "gen-plate", *SMALL_PLATE)
    assert first == again != other
    assert first.startswith("spec-")
    assert len(Workspace(ws).entries("spec")) == 2

    elsewhere = tmp_path / "ws2"
    assert _ok(capsys, elsewhere, "--seed", "3", "gen-plate", *SMALL_PLATE) == first
    spec_a = Workspace(ws).file(Workspace(ws).get(first), "spec.json").read_bytes()
    spec_b = Workspace(elsewhere).file(Workspace(elsewhere).get(first), "spec.json").read_bytes()
    assert spec_a == spec_b


def test_threads_do_not_change_artifact_ids(tmp_path, capsys):
    ws = tmp_path / "ws"
    spec = _ok(capsys, ws, "gen-plate", *SMALL_PLATE)
    single = _ok(capsys, ws, "--threads", "1", "simulate", "--spec", spec, *SMALL_DETECTOR)
    multi = _ok(capsys, ws, "--threads", "3", "simulate", "--spec", spec, *SMALL_DETECTOR)
    assert single == multi


def test_exit_codes(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert _run(capsys, ws, "gen-plate", "--margin", "-1")[0] == 1
    assert _run(capsys, ws, "gen-plate", "--pores", "500", "--plate", "5,5,2", "--max-retries", "2")[0] == 2
    assert _run(capsys, ws, "recon", "--images", "image-set-000000000000")[0] == 2
    spec = _ok(capsys, ws, "gen-plate", *SMALL_PLATE)
    assert _run(capsys, ws, "simulate", "--spec", spec, "--preset", "ultraq")[0] == 1
    assert _run(capsys, ws, "train-cnn", "--arch", "8-2-2")[0] == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    ws = tmp_path / "ws"
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"workspace": str(ws), "seed": 5, "pores": 2, "plate": [12, 12, 4],
                               "segments": 8}), encoding="utf-8")
    from_file = cli_main(["--config", str(cfg), "gen-plate"])
    spec = capsys.readouterr().out.strip()
    assert from_file == 0
    entry = Workspace(ws).get(spec)
    assert entry.meta["pores"] == 2
    run = json.loads(Workspace(ws).file(entry, "run.json").read_text(encoding="utf-8"))
    assert run["seed"] == 5

    flagged = cli_main(["--config", str(cfg), "gen-plate", "--pores", "3"])
    spec3 = capsys.readouterr().out.strip()
    assert flagged == 0 and Workspace(ws).get(spec3).meta["pores"] == 3


def test_toml_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('pores = 2\nscale-range = [0.5, 1.0]\n', encoding="utf-8")
    assert load_config_file(str(cfg)) == {"pores": 2, "scale_range": [0.5, 1.0]}
    (tmp_path / "bad.json").write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "bad.json"))


def test_pore_branch_end_to_end(tmp_path, capsys):
    ws = tmp_path / "ws"
    spec = _ok(capsys, ws, "gen-plate", *SMALL_PLATE)
    images = _ok(capsys, ws, "simulate", "--spec", spec, *SMALL_DETECTOR, "--noise", "0.05", "--png")
    segments = _ok(capsys, ws, "extract-segments", "--images", images, "--count", "40", "--segment-size", "8")
    model = _ok(capsys, ws, "train-cnn", "--segment-set", segments, "--arch", "8-2-2", "--epochs", "5")
    features = _ok(capsys, ws, "classify", "--model", model, "--images", images)
    rates = _ok(capsys, ws, "eval", "--features", features)
    pores = _ok(capsys, ws, "report", "--features", features, "--min-pts", "3")
    clusters = _ok(capsys, ws, "cluster", "--features", features)
    fitted = _ok(capsys, ws, "fit", "--clusters", clusters)

    catalog = Workspace(ws)
    assert catalog.get(segments).meta["count"] == 40
    assert catalog.get(model).meta["arch"] == "8-2-2"
    assert set(catalog.get(rates).meta) >= {"tp_rate", "fn_rate", "fp_rate"}
    assert catalog.file(catalog.get(pores), "pores.csv").read_text().startswith("cluster_id")
    assert catalog.get(fitted).parents == [clusters]
    assert spec in [e.id for e in catalog.lineage(pores)]
    assert _ok(capsys, ws, "verify") == ""
    assert _ok(capsys, ws, "list", "--kind", "model").splitlines()[-1] == model


def test_rotation_series_reconstructs(tmp_path, capsys):
    ws = tmp_path / "ws"
    spec = _ok(capsys, ws, "gen-plate", *SMALL_PLATE)
    images = _ok(capsys, ws, "simulate", "--spec", spec, *SMALL_DETECTOR, "--projections", "12", "--noise", "0")
    volume = _ok(capsys, ws, "recon", "--images", images, "--rows", "20,24")
    entry = Workspace(ws).get(volume)
    assert entry.kind == "volume"
    assert entry.meta["shape"][1] == 2


def test_layer_branch_end_to_end(tmp_path, capsys):
    ws = tmp_path / "ws"
    fml = _ok(capsys, ws, "gen-fml")
    small = ["--nx", "16", "--ny", "16", "--nz", "32", "--region", "4,4,12,12"]
    baseline = _ok(capsys, ws, "synth-volume", "--spec", fml, *small, "--stretch", "1.0")
    damaged = _ok(capsys, ws, "synth-volume", "--spec", fml, *small, "--stretch", "1.3")
    profiles = _ok(capsys, ws, "zslice", "--volume", baseline)
    ae = _ok(capsys, ws, "train-ae", "--profiles", profiles, "--epochs", "5", "--channels", "2")
    amap = _ok(capsys, ws, "anomaly", "--model", ae, "--volume", damaged)
    zcnn = _ok(capsys, ws, "train-zcnn", "--volumes", f"{baseline},{damaged}", "--epochs", "3",
               "--filters", "2,2")
    code, _ = _run(capsys, ws, "train-zcnn", "--volumes", f"{baseline},{damaged}", "--holdout", "0.99")
    assert code == 1

    catalog = Workspace(ws)
    assert catalog.get(profiles).meta["grid"] == [4, 4]
    assert catalog.get(ae).meta["tau"] > 0
    assert 0.0 <= catalog.get(amap).meta["auc"] <= 1.0
    assert catalog.get(zcnn).meta["held_out_accuracy"] is not None
    assert _run(capsys, ws, "anomaly", "--model", zcnn, "--volume", damaged)[0] == 2


@pytest.mark.slow
def test_experiment_report_is_reproducible(tmp_path, capsys):
    args = ["--seed", "0", "--threads", "1", "experiment"]
    first = _ok(capsys, tmp_path / "a", *args)
    second = _ok(capsys, tmp_path / "b", *args)
    assert first == second
    a, b = Workspace(tmp_path / "a"), Workspace(tmp_path / "b")
    report = a.file(a.get(first), "report.json")
    assert report.read_bytes() == b.file(b.get(second), "report.json").read_bytes()
    body = json.loads(report.read_text(encoding="utf-8"))
    assert body["held_out"]["tp_rate"] >= 0.9
    assert body["fp_probe"]["noisy"] >= body["fp_probe"]["zero_noise"]
