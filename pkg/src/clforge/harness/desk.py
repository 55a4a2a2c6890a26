"""Chain the CLI stages for one desk-scale experiment.

Each stage is skipped when its output already exists, so an interrupted run
can be resumed by calling again with the same output directory.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .cli import EXIT_OK, main


@dataclass
class DeskPlan:
    corpus: str
    split: dict
    pretrain: dict                 # model kind -> pretrain config path
    finetune: str
    runs: list = field(default_factory=list)

    @classmethod
    def load(cls, path) -> "DeskPlan":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        here = path.parent
        return cls(corpus=str(here / raw["corpus"]), split=raw["split"],
                   pretrain={k: str(here / v) for k, v in raw["pretrain"].items()},
                   finetune=str(here / raw["finetune"]), runs=raw.get("runs", []))


def run_name(run: dict) -> str:
    return f"{run['model']}_{run['strategy']}"


def _call(argv):
    code = main([str(a) for a in argv])
    if code != EXIT_OK:
        raise RuntimeError(f"clforge {argv[0]} exited with {code}")


def run_desk(plan: DeskPlan, out, runs=None, log=print) -> dict:
    """Run the selected stages; returns paths plus per-stage wall-clock seconds."""
    out = Path(out)
    timings = {}

    def stage(name, target, argv):
        if Path(target).exists():
            return
        t0 = time.time()
        log(f"[{name}]")
        _call(argv)
        timings[name] = round(time.time() - t0, 1)

    corpus_dir, scen_dir = out / "corpus", out / "scenario"
    stage("gen-corpus", corpus_dir / "corpus.jsonl",
          ["gen-corpus", "--config", plan.corpus, "--out", corpus_dir])
    s = plan.split
    stage("split", scen_dir / "scenario.json",
          ["split", "--corpus", corpus_dir / "corpus.jsonl", "--manifests", corpus_dir / "manifests",
           "--id-test", s["id_test"], "--id-valid", s["id_valid"], "--seed", s["seed"],
           "--test-fraction", s.get("test_fraction", 0.1), "--out", scen_dir])
    scenario = scen_dir / "scenario.json"

    selected = [r for r in plan.runs if runs is None or run_name(r) in runs]
    kinds = sorted({r["model"] for r in selected} | ({"decoder"} if runs is None else set()))
    ckpts = {}
    for kind in kinds:
        ckpts[kind] = out / f"{kind}.ckpt"
        stage(f"pretrain-{kind}", ckpts[kind],
              ["pretrain", "--scenario", scenario, "--model", kind, "--config", plan.pretrain[kind],
               "--out", ckpts[kind]])
    if "decoder" in ckpts:
        stage("zeroshot", out / "zeroshot" / "zeroshot.json",
              ["zeroshot", "--ckpt", ckpts["decoder"], "--scenario", scenario, "--config", plan.finetune,
               "--out", out / "zeroshot"])

    run_dirs = {}
    for r in selected:
        name = run_name(r)
        run_dirs[name] = out / "runs" / name
        stage(name, run_dirs[name] / "report.json",
              ["finetune", "--ckpt", ckpts[r["model"]], "--scenario", scenario, "--strategy", r["strategy"],
               "--strategy-params", json.dumps(r.get("params", {})), "--config", plan.finetune,
               "--out", run_dirs[name]])
    if run_dirs:
        stage("report", out / "comparison" / "comparison.json",
              ["report", "--runs", *run_dirs.values(), "--out", out / "comparison"])
    return {"scenario": scenario, "ckpts": ckpts, "runs": run_dirs, "zeroshot": out / "zeroshot",
            "timings": timings}
