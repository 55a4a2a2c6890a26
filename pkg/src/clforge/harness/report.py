"""Report JSON, heatmap CSVs and summary tables."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path

from ..metrics import EvalMatrix, LITERAL_T, OBSERVED


METRIC_NOTES = {
    "BLEU": "corpus-level, 4-gram, add-one smoothing on zero counts at orders >= 2",
    "codebleu_lite": "bracket-tree and def-use stand-ins for AST and dataflow match",
    "divisor_modes": {OBSERVED: "mean over observed steps", LITERAL_T: "sum over observed steps divided by T"},
}


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def write_heatmap(matrix: EvalMatrix, domains, path, config_hash: str) -> None:
    """Rows are fine-tuning steps, columns are test domains; upper triangle left empty."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(["step"] + list(domains))
        for j, row in enumerate(matrix.rows(), start=1):
            w.writerow([domains[j - 1]] + ["" if v is None else f"{v:.6f}" for v in row])


def read_heatmap(path, metric_name: str = "") -> EvalMatrix:
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))[1:]
    return EvalMatrix.from_rows(metric_name, [[float(v) if v else None for v in r[1:]] for r in rows])


def emit_report(result, out_dir, config: dict, config_hash: str, extra: dict | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {mode: result.summary(mode) for mode in (OBSERVED, LITERAL_T)}
    # wall-clock figures and the output path go to a sidecar so report.json is reproducible
    log = [{k: v for k, v in r.items() if k != "seconds"} for r in result.log]
    timing = {"seconds": [r.get("seconds") for r in result.log], "out": str(out)}
    report = {
        "config": {k: v for k, v in config.items() if k != "out"},
        "config_hash": config_hash,
        "strategy": result.strategy,
        "domains": result.domains,
        "matrices": {m: mat.rows() for m, mat in result.matrices.items()},
        "summary": summary,
        "metric_notes": METRIC_NOTES,
        "log": log,
        **(extra or {}),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    (out / "report.json").write_text(json.dumps(_clean(report), indent=2) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")
    for m, mat in result.matrices.items():
        write_heatmap(mat, result.domains, out / f"heatmap_{m.replace('@', '')}.csv", config_hash)
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "kind", "domain", "value"])
        for m, s in summary[OBSERVED].items():
            for d, v in s["A"].items():
                w.writerow([m, "A", d, f"{v:.4f}"])
            for d, v in s["F"].items():
                w.writerow([m, "F", d, f"{v:.4f}"])
    return report


def write_zeroshot(res: dict, out_dir, config_hash: str = "") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {**res, "config_hash": config_hash,
               "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    (out / "zeroshot.json").write_text(json.dumps(_clean(payload), indent=2) + "\n", encoding="utf-8")
    with (out / "zeroshot.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["split"] + res["metrics"])
        for row in res["rows"]:
            w.writerow([row["split"]] + [f"{row[m]:.2f}" for m in res["metrics"]])


def comparison_table(reports: dict, metric: str = "EM@1") -> list:
    """Mean A and mean F per strategy for one metric (observed divisor)."""
    rows = []
    for name, rep in reports.items():
        s = rep["summary"][OBSERVED][metric]
        A, F = list(s["A"].values()), list(s["F"].values())
        rows.append({"strategy": name, "mean_A": sum(A) / len(A), "mean_F": sum(F) / len(F) if F else 0.0})
    return rows
