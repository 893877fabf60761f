"""Long-format CSV/JSON emission of matrix results.

Wall times go to JSON only so CSV output is byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .scenarios import DenoiserOutcome, MatrixRun, ScenarioResult, ScenarioSpec

RESULT_FIELDS = ["dataset", "denoiser", "model", "train_stage", "test_stage", "status", "metric", "value"]
OUTCOME_FIELDS = ["dataset", "denoiser", "split", "status", "metric", "value"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _json_value(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def result_rows(results: list[ScenarioResult]):
    for r in results:
        s = r.spec
        head = [s.dataset, s.denoiser, s.model, s.train_stage, s.test_stage, r.status]
        if not r.ok:
            yield head + ["error", r.reason]
            continue
        for name, value in r.metrics.items():
            yield head + [name, _fmt(value)]


def outcome_metrics(o: DenoiserOutcome) -> dict:
    m = {}
    if o.distribution is not None:
        m["kl_mean"] = o.distribution.kl_mean
        m.update({f"kl[{c}]": v for c, v in o.distribution.kl_per_variable.items()})
        m["corr_diff"] = o.distribution.corr_diff
        m["corr_diff_elementwise_mean"] = o.distribution.corr_diff_elementwise_mean
    if o.nmse_noisy is not None:
        m["nmse_noisy"] = o.nmse_noisy
        m["nmse_denoised"] = o.nmse_denoised
        m["mse_ratio"] = o.mse_ratio
    if o.report is not None:
        m["epochs_run"] = o.report.epochs_run
        m["instances_touched"] = o.report.instances_touched
        m["final_noisy_count"] = o.report.final_noisy_count
    return m


def outcome_rows(outcomes: list[DenoiserOutcome]):
    for o in outcomes:
        head = [o.dataset, o.denoiser, o.split, o.status]
        if o.status != "ok":
            yield head + ["error", o.reason]
            continue
        for name, value in outcome_metrics(o).items():
            yield head + [name, _fmt(value)]


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)
    return buf.getvalue()


def results_to_json(run: MatrixRun) -> dict:
    cells = []
    for r in run.results:
        cells.append({
            **dict(zip(RESULT_FIELDS[:5], r.spec.key)),
            "seed": r.spec.seed,
            "status": r.status,
            "reason": r.reason,
            "metrics": {k: _json_value(v) for k, v in (r.metrics or {}).items()},
            "wall_time": r.wall_time,
        })
    denoising = []
    for o in run.outcomes:
        denoising.append({
            "dataset": o.dataset, "denoiser": o.denoiser, "split": o.split, "status": o.status,
            "reason": o.reason, "metrics": {k: _json_value(v) for k, v in outcome_metrics(o).items()},
            "wall_time": o.wall_time,
        })
    return {"results": cells, "denoising": denoising}


def emit_report(run: MatrixRun, fmt: str, path) -> Path:
    """Write results in long format. CSV writes ``path`` plus ``<stem>_denoising.csv``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(results_to_json(run), indent=1) + "\n")
    elif fmt == "csv":
        path.write_text(_csv_text(RESULT_FIELDS, result_rows(run.results)))
        path.with_name(path.stem + "_denoising.csv").write_text(_csv_text(OUTCOME_FIELDS, outcome_rows(run.outcomes)))
    else:
        raise ValueError(f"unknown format {fmt!r}; use csv or json")
    return path


def load_results(path) -> list[ScenarioResult]:
    """Rebuild scenario results (metrics only) from a JSON report."""
    data = json.loads(Path(path).read_text())
    out = []
    for c in data["results"]:
        spec = ScenarioSpec(c["dataset"], c["denoiser"], c["model"], c["train_stage"], c["test_stage"], c["seed"])
        metrics = {k: (math.nan if v is None else v) for k, v in c["metrics"].items()} or None
        out.append(ScenarioResult(spec, metrics, status=c["status"], reason=c["reason"], wall_time=c["wall_time"]))
    return out
