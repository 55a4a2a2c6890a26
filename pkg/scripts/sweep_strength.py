"""Sweep a regularizer strength on an existing desk scenario and checkpoint.

    python scripts/sweep_strength.py --desk runs/desk --strategy si --param c --values 1 10 100 1000
"""
import argparse
import json
from pathlib import Path

from clforge.harness.cli import main as clforge

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--desk", default=str(ROOT / "runs" / "desk"), help="output dir of run_desk_experiment.py")
    ap.add_argument("--strategy", required=True)
    ap.add_argument("--param", required=True)
    ap.add_argument("--values", nargs="+", type=float, required=True)
    ap.add_argument("--config", default=str(ROOT / "configs" / "finetune.json"))
    args = ap.parse_args()
    desk = Path(args.desk)
    rows = []
    for v in args.values:
        out = desk / "sweeps" / f"{args.strategy}_{args.param}{v:g}"
        if not (out / "report.json").exists():
            code = clforge(["finetune", "--ckpt", str(desk / "decoder.ckpt"),
                            "--scenario", str(desk / "scenario" / "scenario.json"), "--strategy", args.strategy,
                            "--strategy-params", json.dumps({args.param: v}), "--config", args.config,
                            "--out", str(out)])
            if code:
                raise SystemExit(code)
        rep = json.loads((out / "report.json").read_text())
        s = rep["summary"]["observed"]["EM@1"]
        rows.append((v, sum(s["A"].values()) / len(s["A"]), sum(s["F"].values()) / len(s["F"])))
    print(f"{args.param:>10s} {'mean A':>8s} {'mean F':>8s}")
    for v, a, f in rows:
        print(f"{v:10g} {a:8.2f} {f:8.2f}")


if __name__ == "__main__":
    main()
