"""Desk-scale experiment: corpus, split, pre-training, zero-shot and continual runs.

    python scripts/run_desk_experiment.py --plan configs/desk.json --out runs/desk
    python scripts/run_desk_experiment.py --out runs/desk --only decoder_naive decoder_si
"""
import argparse
import json
from pathlib import Path

from clforge.harness.desk import DeskPlan, run_desk

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--plan", default=str(ROOT / "configs" / "desk.json"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "desk"))
    ap.add_argument("--only", nargs="*", help="run names such as decoder_naive (default: all)")
    args = ap.parse_args()
    res = run_desk(DeskPlan.load(args.plan), args.out, runs=args.only)
    print(json.dumps(res["timings"], indent=2))
    cmp = Path(args.out) / "comparison" / "comparison.csv"
    if cmp.exists():
        print(cmp.read_text())


if __name__ == "__main__":
    main()
