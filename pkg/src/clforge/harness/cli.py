"""Command-line entry point: ``clforge <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ..corpus import (LexError, SyntheticConfig, build_scenario, builtin_manifests, extract_file, gen_synthetic,
                      leakage_check, load_manifest_dir, load_scenario, read_jsonl, save_manifest, save_scenario,
                      write_jsonl)
from ..corpus.pipeline import OverlappingDomainsError
from ..model import ModelConfig, TrainingError, build_vocab, load_checkpoint, pretrain, save_checkpoint
from ..strategies import make_strategy
from .config import ConfigError, RunConfig, config_hash, env_seed, load_pretrain_config, load_run_config, to_dict
from .continual import run_continual
from .report import comparison_table, emit_report, write_zeroshot
from .zeroshot import run_zeroshot

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
log = logging.getLogger("clforge")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _scenario(path):
    try:
        return load_scenario(path)
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load scenario {path}: {exc}") from exc


def _manifests(path):
    specs = load_manifest_dir(path) if path else builtin_manifests()
    if not specs:
        raise DataError(f"no manifests found in {path}")
    return specs


def _corpus_config(data: dict) -> SyntheticConfig:
    data = dict(data)
    names = data.pop("domains", None)
    specs = builtin_manifests()
    if names is not None:
        by_name = {s.name: s for s in specs}
        unknown = [n for n in names if n not in by_name]
        if unknown:
            raise ConfigError(f"unknown domain(s) {unknown}")
        specs = [by_name[n] for n in names]
    if "length_range" in data:
        data["length_range"] = tuple(data["length_range"])
    try:
        return SyntheticConfig(domains=specs, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gen_corpus(args):
    raw = _read_json(args.config)
    raw.pop("split", None)
    cfg = _corpus_config(raw)
    if (s := env_seed()) is not None:
        cfg.seed = s
    samples = gen_synthetic(cfg)
    out = Path(args.out)
    write_jsonl(samples, out / "corpus.jsonl")
    for spec in cfg.domains:
        save_manifest(spec, out / "manifests" / f"{spec.name.lower()}.json")
    _write_json(out / "manifests" / "order.json", [s.name for s in cfg.domains])
    print(f"wrote {len(samples)} methods to {out / 'corpus.jsonl'}")


def cmd_extract(args):
    specs = _manifests(args.manifests)
    files = sorted(Path(args.src).rglob("*.java"))
    if not files:
        raise DataError(f"no .java files under {args.src}")
    samples, failed = [], []
    for f in files:
        try:
            samples.extend(extract_file(f.read_text(encoding="utf-8", errors="replace"), specs))
        except LexError as exc:
            failed.append({"file": str(f), "error": str(exc)})
    out = Path(args.out)
    write_jsonl(samples, out / "corpus.jsonl")
    _write_json(out / "extract_log.json", {"files": len(files), "methods": len(samples), "failed": failed})
    print(f"{len(samples)} methods from {len(files)} files ({len(failed)} failed to lex)")


def cmd_split(args):
    specs = _manifests(args.manifests)
    samples = read_jsonl(args.corpus)
    seed = args.seed
    if (s := env_seed()) is not None:
        seed = s
    try:
        scenario, tally = build_scenario(samples, specs, args.id_test, args.id_valid, seed, args.test_fraction)
    except OverlappingDomainsError as exc:
        raise DataError(str(exc)) from exc
    path = save_scenario(scenario, args.out)
    _write_json(Path(args.out) / "tally.json", tally)
    print(f"scenario written to {path}: {tally}")


def _vocab_corpus(scenario):
    yield from (s.tokens for s in scenario.id_split.train)
    for _, split in scenario.ood:
        yield from (s.tokens for s in split.train)


def cmd_pretrain(args):
    try:
        cfg = load_pretrain_config(args.config)
    except FileNotFoundError as exc:
        raise DataError(f"missing config {args.config}") from exc
    scenario = _scenario(args.scenario)
    vocab = build_vocab(list(_vocab_corpus(scenario)), cfg.vocab.min_freq, cfg.vocab.max_size)
    mcfg = dict(to_dict(cfg.model), kind=args.model, vocab_size=vocab.size)
    model_cfg = ModelConfig(**mcfg)
    train = [vocab.encode(s.tokens) for s in scenario.id_split.train]
    valid = [vocab.encode(s.tokens) for s in scenario.id_split.valid]
    model, info = pretrain(model_cfg, train, valid, cfg.schedule, cfg.seeds.model,
                           progress=lambda st, tl, vl: print(f"step {st}: train {tl:.4f} valid {vl:.4f}", flush=True))
    h = config_hash({"pretrain": to_dict(cfg), "kind": args.model})
    save_checkpoint(args.out, model, vocab, cfg.seeds.model, info["best_step"], {"config_hash": h, **info})
    _write_json(str(args.out) + ".log.json", {"config_hash": h, **info})
    print(f"saved {args.out} (best step {info['best_step']}, valid loss {info['best_valid_loss']:.4f})")


def cmd_zeroshot(args):
    model, vocab, meta = load_checkpoint(args.ckpt)
    scenario = _scenario(args.scenario)
    cfg = load_run_config(args.config) if args.config else RunConfig()
    try:
        res = run_zeroshot(model, vocab, scenario, cfg.eval)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    h = config_hash({"eval": to_dict(cfg.eval), "ckpt": meta.get("extra", {}).get("config_hash", "")})
    write_zeroshot(res, args.out, h)
    for row in res["rows"]:
        print(row["split"], {m: round(row[m], 2) for m in res["metrics"]})


def cmd_finetune(args):
    cfg = load_run_config(args.config) if args.config else RunConfig()
    block = {"name": args.strategy, "params": json.loads(args.strategy_params) if args.strategy_params else {}}
    try:
        strategy = make_strategy(block)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg.strategy = block
    cfg.scenario = str(args.scenario)
    cfg.out = str(args.out)
    model, vocab, meta = load_checkpoint(args.ckpt)
    cfg.model = model.config.to_dict()
    scenario = _scenario(args.scenario)
    if scenario.T < 2:
        raise DataError("continual fine-tuning needs at least two domains")
    result = run_continual(model, vocab, scenario, strategy, cfg.finetune, cfg.eval, cfg.seeds,
                           progress=lambda r: print(f"experience {r['experience']} ({r['domain']}): "
                                                    f"{r['epochs']} epochs, best {r['best_epoch']}", flush=True))
    data = to_dict(cfg)
    data["ckpt_config_hash"] = meta.get("extra", {}).get("config_hash", "")
    h = config_hash(data)
    emit_report(result, args.out, data, h)
    s = result.summary()
    print("EM@1 A:", {k: round(v, 2) for k, v in s["EM@1"]["A"].items()})
    print("EM@1 F:", {k: round(v, 2) for k, v in s["EM@1"]["F"].items()})


def cmd_report(args):
    reports = {}
    for d in args.runs:
        rep = _read_json(Path(d) / "report.json")
        reports[f"{rep['config']['model'].get('kind', '?')}/{rep['strategy']['name']}"] = rep
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tables = {}
    for metric in ("EM@1", "EM@5", "EM@10", "BLEU", "EM", "codebleu_lite"):
        rows = comparison_table(reports, metric)
        tables[metric] = rows
    with (out / "comparison.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "run", "mean_A", "mean_F"])
        for metric, rows in tables.items():
            for r in rows:
                w.writerow([metric, r["strategy"], f"{r['mean_A']:.4f}", f"{r['mean_F']:.4f}"])
    _write_json(out / "comparison.json", {"runs": sorted(reports),
                                          "config_hashes": {k: v["config_hash"] for k, v in reports.items()},
                                          "tables": tables})
    for r in tables["EM@1"]:
        print(f"{r['strategy']:24s} A={r['mean_A']:.2f} F={r['mean_F']:.2f}")


def cmd_validate(args):
    scenario = _scenario(args.scenario)
    res = leakage_check(scenario)
    for h, reason in res["violations"]:
        print(f"{h[:12]}  {reason}")
    print(f"{len(res['violations'])} violation(s)")
    if res["violations"]:
        raise DataError("leakage check failed")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clforge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-corpus", help="generate the synthetic corpus")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("extract", help="extract methods and API sites from .java sources")
    s.add_argument("--src", required=True)
    s.add_argument("--manifests")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("split", help="dedup, assign domains and split")
    s.add_argument("--corpus", required=True)
    s.add_argument("--manifests")
    s.add_argument("--id-test", type=int, required=True)
    s.add_argument("--id-valid", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--test-fraction", type=float, default=0.10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("pretrain", help="pre-train a decoder or encoder on the ID split")
    s.add_argument("--scenario", required=True)
    s.add_argument("--model", choices=("decoder", "encoder"), required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("zeroshot", help="zero-shot ID vs OOD evaluation (decoder)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_zeroshot)

    s = sub.add_parser("finetune", help="continual fine-tuning over the OOD domains")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--strategy", required=True)
    s.add_argument("--strategy-params")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("report", help="merge run reports into comparison tables")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("validate", help="leakage check of a scenario")
    s.add_argument("--scenario", required=True)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LexError, OverlappingDomainsError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
