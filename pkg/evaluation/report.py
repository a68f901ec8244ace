"""
Report Comparison.
Loads benchmark or experiment reports and produces a comparison table,
e.g. a noisy run against its zero-noise counterpart.
"""
import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple


def load_report(path: str) -> Dict[str, Any]:
    """Load a benchmark or experiment report from a JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    data.setdefault("label", Path(path).stem)
    return data


def _fmt(value: Any, pattern: str) -> str:
    return "—" if value is None else pattern.format(value)


def _is_experiment(report: Dict[str, Any]) -> bool:
    return "held_out" in report


Metric = Tuple[str, Callable[[Dict[str, Any]], str]]

EXPERIMENT_METRICS: List[Metric] = [
    ("Noise sigma",          lambda r: _fmt(r["noise_sigma"], "{:.2f}")),
    ("Detector",             lambda r: "×".join(str(v) for v in r["scaling"]["detector"])),
    ("Held-out TP rate",     lambda r: _fmt(r["held_out"]["tp_rate"], "{:.1%}")),
    ("Held-out FN rate",     lambda r: _fmt(r["held_out"]["fn_rate"], "{:.1%}")),
    ("Train-plate TP rate",  lambda r: _fmt(r["train_plate"]["tp_rate"], "{:.1%}")),
    ("FP rate (no noise)",   lambda r: _fmt(r["fp_probe"]["zero_noise"], "{:.2%}")),
    ("FP rate (noisy)",      lambda r: _fmt(r["fp_probe"]["noisy"], "{:.2%}")),
    ("Zero-noise TP rate",   lambda r: _fmt((r.get("ablation") or {}).get("zero_noise_held_out", {}).get("tp_rate"),
                                            "{:.1%}")),
    ("Detected pores",       lambda r: _fmt(r["pores"].get("pores"), "{}")),
]

BENCHMARK_METRICS: List[Metric] = [
    ("Pass Rate",            lambda r: f"{r['summary']['pass_rate']:.1%}"),
    ("Total Time (s)",       lambda r: f"{r['summary']['total_time_s']:.1f}"),
]


def _metrics(reports: List[Dict[str, Any]]) -> List[Metric]:
    return EXPERIMENT_METRICS if all(_is_experiment(r) for r in reports) else BENCHMARK_METRICS


def _check_ids(reports: List[Dict[str, Any]]) -> List[str]:
    ids = []
    for r in reports:
        for s in r.get("scores", []):
            if s["check_id"] not in ids:
                ids.append(s["check_id"])
    return ids


def _check_cell(report: Dict[str, Any], check_id: str) -> str:
    score = next((s for s in report.get("scores", []) if s["check_id"] == check_id), None)
    if score is None:
        return "—"
    mark = "✅" if score["passed"] else "❌"
    return f"{mark} {_fmt(score['value'], '{:.4g}')}"


def comparison_table(reports: List[Dict[str, Any]]) -> str:
    """Side-by-side plain-text table of several reports."""
    if not reports:
        return "No reports to compare."
    labels = [r["label"] for r in reports]
    header = f"{'Metric':<30}" + "".join(f"{name:>22}" for name in labels)
    lines = ["=" * len(header), "  REPORT COMPARISON", "=" * len(header), header, "-" * len(header)]
    for name, fn in _metrics(reports):
        lines.append(f"{name:<30}" + "".join(f"{fn(r):>22}" for r in reports))
    check_ids = _check_ids(reports)
    if check_ids:
        lines.append("-" * len(header))
        for cid in check_ids:
            lines.append(f"{cid:<30}" + "".join(f"{_check_cell(r, cid):>22}" for r in reports))
    lines.append("=" * len(header))
    return "\n".join(lines)


def generate_markdown_report(reports: List[Dict[str, Any]]) -> str:
    """Markdown comparison of several reports."""
    lines = ["# radisynth Report Comparison\n", "## Summary\n"]
    sep = "|---|" + "|".join("---" for _ in reports) + "|"
    lines.append("| Metric | " + " | ".join(r["label"] for r in reports) + " |")
    lines.append(sep)
    for name, fn in _metrics(reports):
        lines.append(f"| {name} | " + " | ".join(fn(r) for r in reports) + " |")

    check_ids = _check_ids(reports)
    if check_ids:
        lines.append("\n## Per-Check Results\n")
        lines.append("| Check | " + " | ".join(r["label"] for r in reports) + " |")
        lines.append(sep)
        for cid in check_ids:
            lines.append(f"| {cid} | " + " | ".join(_check_cell(r, cid) for r in reports) + " |")
    return "\n".join(lines)


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Compare radisynth reports")
    parser.add_argument("reports", nargs="+", help="Paths to JSON report files")
    parser.add_argument("--markdown", action="store_true", help="Output as Markdown")
    args = parser.parse_args()

    loaded = [load_report(p) for p in args.reports]
    print(generate_markdown_report(loaded) if args.markdown else comparison_table(loaded))
