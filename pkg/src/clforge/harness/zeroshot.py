from __future__ import annotations

from .config import EvalConfig
from .evaluate import CALL_METRICS, USAGE_METRICS, run_outputs
from .tasks import API_CALL, API_USAGE

# Published decoder EM@1 (ID vs. pooled OOD), kept only for side-by-side reading.
PUBLISHED_REFERENCE = {"decoder_em1_id": 72.88, "decoder_em1_ood": 40.82}


def _drop(id_value: float, value: float) -> float:
    return float("nan") if id_value == 0 else 100.0 * (id_value - value) / id_value


def run_zeroshot(model, vocab, scenario, eval_cfg: EvalConfig | None = None) -> dict:
    """Evaluate a pre-trained decoder on the ID test set and every OOD test set, without fine-tuning."""
    if model.config.kind != "decoder":
        raise ValueError("zero-shot is decoder-only")
    eval_cfg = eval_cfg or EvalConfig()
    rows = [{"split": "ID", **_flat(run_outputs(model, vocab, scenario.id_split.test, eval_cfg).scores())}]
    pooled = None
    for spec, split in scenario.ood:
        outs = run_outputs(model, vocab, split.test, eval_cfg)
        rows.append({"split": spec.name, **_flat(outs.scores())})
        pooled = outs if pooled is None else pooled + outs
    rows.append({"split": "OOD", **_flat(pooled.scores())})
    id_row = rows[0]
    metric_names = [k for k in id_row if k != "split"]
    for row in rows[1:]:
        row["drop_pct"] = {m: _drop(id_row[m], row[m]) for m in metric_names}
    return {"rows": rows, "metrics": metric_names, "paper_reference": dict(PUBLISHED_REFERENCE)}


def _flat(res: dict) -> dict:
    out = {}
    for m in CALL_METRICS:
        if m in res[API_CALL]:
            out[m] = res[API_CALL][m]
    for m in USAGE_METRICS:
        out[m] = res[API_USAGE][m]
    return out
