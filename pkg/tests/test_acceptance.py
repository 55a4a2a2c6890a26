"""End-to-end acceptance checks, one test per criterion.

The desk-scale experiment (corpus, both pre-trainings, zero-shot and six
continual runs) is produced once per session from the configs shipped in
``configs/``.  Set CLFORGE_DESK_DIR to reuse a finished experiment directory
instead of a fresh temporary one.
"""
import json
import os
import shutil
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clforge import numcore as nc
from clforge import strategies as S
from clforge.corpus import (CROSS_SPLIT_DUPLICATE, DOMAIN_API_IN_ID, MULTI_DOMAIN, WRONG_DOMAIN, ApiSite,
                            MethodSample, ScenarioData, SplitSet, SyntheticConfig, build_scenario, builtin_manifests,
                            gen_synthetic, leakage_check, load_scenario, save_scenario)
from clforge.harness import EvalConfig, FinetuneSchedule, Seeds, run_continual
from clforge.harness.cli import EXIT_DATA, main
from clforge.harness.desk import DeskPlan, run_desk
from clforge.metrics import EvalMatrix, average_metric, bleu, codebleu_lite, em_at_k, exact_match, forgetting
from clforge.model import ModelConfig, ModelState, build_vocab

from conftest import ACCEPTANCE_LINES
from gradcases import PENALTY_NAMES, PRIMITIVE_NAMES, TOL, penalty_case, primitive_case

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SUITE_START = time.time()

# tolerances and thresholds
GRAD_RTOL = TOL                 # max relative error, analytic vs central differences
GRAD_INSTANCES = 100
GRAD_SECONDS = 120
FISHER_ATOL = 1e-10
ZS_EM_GAP = 10.0                # ID EM@1 minus pooled OOD EM@1, percentage points
ZS_SECONDS = 20 * 60
CUMULATIVE_F_MAX = 0.5
LEAK_SEEDS = 20
SUITE_SECONDS = 90 * 60


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def clforge(argv):
    return main([str(a) for a in argv])


def mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    out = Path(os.environ["CLFORGE_DESK_DIR"]) if os.environ.get("CLFORGE_DESK_DIR") else \
        tmp_path_factory.mktemp("desk")
    res = run_desk(DeskPlan.load(CONFIGS / "desk.json"), out)
    reports = {name: json.loads((d / "report.json").read_text()) for name, d in res["runs"].items()}
    return res, reports


def mean_f(report, metric="EM@1"):
    return mean(report["summary"]["observed"][metric]["F"].values())


# ---------------------------------------------------------------- 1

def test_c01_gradient_correctness():
    t0 = time.time()
    worst = {}
    for name in PRIMITIVE_NAMES:
        worst[name] = max(primitive_case(name, seed) for seed in range(GRAD_INSTANCES))
    for name in PENALTY_NAMES:
        worst[name] = max(penalty_case(name, seed) for seed in range(GRAD_INSTANCES))
    secs = time.time() - t0
    top = max(worst, key=worst.get)
    ok = worst[top] < GRAD_RTOL and secs < GRAD_SECONDS and set(PRIMITIVE_NAMES) == set(nc.PRIMITIVES)
    record(1, ok, f"{len(worst)} ops x {GRAD_INSTANCES} instances, worst rel err {worst[top]:.2e} ({top}), "
                  f"{secs:.1f}s")


# ---------------------------------------------------------------- 2

def test_c02_fisher_oracle():
    r = np.random.default_rng(0)
    d_in, n_cls = 6, 4                         # 6*4 weights + 4 biases = 28 parameters
    X = r.normal(size=(8, d_in))
    y = r.integers(0, n_cls, size=8)
    theta = r.normal(size=d_in * n_cls + n_cls)

    def grad_fn(i):
        W = nc.Tensor(theta[:d_in * n_cls].reshape(d_in, n_cls), requires_grad=True)
        b = nc.Tensor(theta[d_in * n_cls:], requires_grad=True)
        z = nc.matmul(nc.Tensor(X[i:i + 1]), W) + b
        loss = nc.cross_entropy(z, np.array([y[i]]))
        g = nc.backward(loss, [W, b])
        return np.concatenate([g[W].reshape(-1), g[b]])

    state = S.ewc_consolidate(S.EwcState(), theta, grad_fn, list(range(8)))
    # closed form per-sample gradient of softmax cross-entropy
    W, b = theta[:d_in * n_cls].reshape(d_in, n_cls), theta[d_in * n_cls:]
    brute = np.zeros_like(theta)
    for i in range(8):
        z = X[i] @ W + b
        p = np.exp(z - z.max())
        p /= p.sum()
        p[y[i]] -= 1.0
        g = np.concatenate([np.outer(X[i], p).reshape(-1), p])
        brute += g * g
    brute /= 8
    err = float(np.abs(state.anchors[0][1] - brute).max())
    record(2, err <= FISHER_ATOL and theta.size <= 100, f"{theta.size} params, 8 samples, max |diff| {err:.1e}")


# ---------------------------------------------------------------- 3

def test_c03_meta_metrics():
    m = EvalMatrix("EM@1", 5)
    m.set(1, 1, 57.37)
    m.set(5, 1, 51.73)
    m.set(2, 2, 60.93)
    m.set(3, 2, 57.66)
    f1, f2 = forgetting(m, 1, 5), forgetting(m, 2, 3)
    exact = f"{f1:.2f}" == "5.64" and f"{f2:.2f}" == "3.27" and abs(f1 - 5.64) < 1e-9 and abs(f2 - 3.27) < 1e-9

    col = EvalMatrix("m", 5)
    for j, v in zip((3, 4, 5), (60.0, 58.0, 56.0)):
        col.set(j, 3, v)
    r = np.random.default_rng(3)
    rand = EvalMatrix("m", 6)
    for j in range(1, 7):
        for i in range(1, j + 1):
            rand.set(j, i, float(r.uniform(0, 100)))
    modes = abs(average_metric(col, 3) - 58.0) < 1e-12 and abs(average_metric(col, 3, "T") - 34.8) < 1e-12
    for i in range(1, 7):
        c = [rand.values[(j, i)] for j in range(i, 7)]
        modes &= abs(average_metric(rand, i) - sum(c) / len(c)) < 1e-9
        modes &= abs(average_metric(rand, i, "T") - sum(c) / 6) < 1e-9
    record(3, exact and modes, f"forgetting {f1:.2f} and {f2:.2f}; average_metric observed/T modes "
                               f"{'ok' if modes else 'MISMATCH'}")


# ---------------------------------------------------------------- 4

def test_c04_zeroshot_gap(desk):
    res, _ = desk
    zs = json.loads((res["zeroshot"] / "zeroshot.json").read_text())
    rows = {row["split"]: row for row in zs["rows"]}
    gap = rows["ID"]["EM@1"] - rows["OOD"]["EM@1"]
    ok = gap >= ZS_EM_GAP and rows["ID"]["BLEU"] > rows["OOD"]["BLEU"]
    detail = (f"ID EM@1 {rows['ID']['EM@1']:.2f} vs OOD {rows['OOD']['EM@1']:.2f} (gap {gap:.2f}); "
              f"BLEU {rows['ID']['BLEU']:.2f} vs {rows['OOD']['BLEU']:.2f}")
    t = res["timings"]
    if "pretrain-decoder" in t:
        secs = t["pretrain-decoder"] + t.get("zeroshot", 0.0)
        ok &= secs < ZS_SECONDS
        detail += f"; pretrain+zeroshot {secs:.0f}s"
    record(4, ok, detail)


# ---------------------------------------------------------------- 5

def test_c05_naive_forgetting(desk):
    _, reports = desk
    dec = reports["decoder_naive"]["summary"]["observed"]["EM@1"]["F"]
    positive = sum(v > 0 for v in dec.values())
    fd, fe = mean_f(reports["decoder_naive"]), mean_f(reports["encoder_naive"])
    record(5, positive >= 3 and fe > fd,
           f"decoder F>0 on {positive}/4 domains {({k: round(v, 2) for k, v in dec.items()})}; "
           f"mean F encoder {fe:.2f} vs decoder {fd:.2f}")


# ---------------------------------------------------------------- 6

def test_c06_strategies_mitigate(desk):
    _, reports = desk
    naive = mean_f(reports["decoder_naive"])
    fs = {s: mean_f(reports[f"decoder_{s}"]) for s in ("replay", "cumulative", "si", "rwalk")}
    ok = all(v < naive for v in fs.values()) and fs["cumulative"] <= CUMULATIVE_F_MAX
    record(6, ok, f"mean F naive {naive:.2f}; " + ", ".join(f"{k} {v:.2f}" for k, v in fs.items()))


# ---------------------------------------------------------------- 7

TINY_CORPUS = {"domains": ["General", "Security", "Android"], "methods_per_domain": 40, "id_methods": 150,
               "seed": 4, "length_range": [20, 40]}
TINY_PRETRAIN = {"model": {"layers": 1, "heads": 2, "embed_dim": 16, "ff_dim": 32, "max_seq_len": 64},
                 "schedule": {"max_steps": 20, "batch": 8, "eval_every": 10, "lr": 0.003},
                 "vocab": {"min_freq": 1}, "seeds": {"data": 4, "model": 4, "train": 4}}
TINY_RUN = {"finetune": {"max_epochs": 2, "batch": 16, "lr": 0.001, "encoder_span_positions": 1},
            "eval": {"max_new": 8, "max_instances": 10}, "seeds": {"data": 4, "model": 4, "train": 4}}


def _cli_session(root: Path):
    root.mkdir(parents=True)
    for name, payload in (("corpus", TINY_CORPUS), ("pretrain", TINY_PRETRAIN), ("run", TINY_RUN)):
        (root / f"{name}.json").write_text(json.dumps(payload))
    codes = [
        clforge(["gen-corpus", "--config", root / "corpus.json", "--out", root / "corpus"]),
        clforge(["split", "--corpus", root / "corpus" / "corpus.jsonl", "--manifests", root / "corpus" / "manifests",
                 "--id-test", "10", "--id-valid", "10", "--seed", "4", "--out", root / "scen"]),
        clforge(["validate", "--scenario", root / "scen" / "scenario.json"]),
    ]
    for kind in ("decoder", "encoder"):
        codes.append(clforge(["pretrain", "--scenario", root / "scen" / "scenario.json", "--model", kind,
                              "--config", root / "pretrain.json", "--out", root / f"{kind}.ckpt"]))
    codes.append(clforge(["zeroshot", "--ckpt", root / "decoder.ckpt", "--scenario", root / "scen" / "scenario.json",
                          "--config", root / "run.json", "--out", root / "zs"]))
    for kind, strat in (("decoder", "rwalk"), ("encoder", "replay")):
        codes.append(clforge(["finetune", "--ckpt", root / f"{kind}.ckpt", "--scenario",
                              root / "scen" / "scenario.json", "--strategy", strat, "--config", root / "run.json",
                              "--out", root / "runs" / kind]))
    codes.append(clforge(["report", "--runs", root / "runs" / "decoder", root / "runs" / "encoder",
                          "--out", root / "cmp"]))
    return codes


def _artifacts(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "timing.json":
            lines = [ln for ln in p.read_bytes().split(b"\n") if b'"timestamp"' not in ln]
            out[str(p.relative_to(root))] = b"\n".join(lines)
    return out


def test_c07_cli_determinism(tmp_path, monkeypatch, capsys):
    # both sessions use the same paths, since paths are part of the run config
    monkeypatch.delenv("CLFORGE_SEED", raising=False)
    root = tmp_path / "session"
    codes_a = _cli_session(root)
    a, out_a = _artifacts(root), capsys.readouterr().out
    shutil.rmtree(root)
    codes_b = _cli_session(root)
    b, out_b = _artifacts(root), capsys.readouterr().out
    differing = sorted(k for k in a if a[k] != b.get(k))
    ok = codes_a == codes_b == [0] * len(codes_a) and a.keys() == b.keys() and not differing and out_a == out_b
    record(7, ok, f"{len(codes_a)} commands, {len(a)} artifacts compared, "
                  f"{'all identical' if not differing else 'differing: ' + ', '.join(differing)}")


# ---------------------------------------------------------------- 8

def _copy(sc: ScenarioData) -> ScenarioData:
    return ScenarioData(SplitSet(list(sc.id_split.train), list(sc.id_split.valid), list(sc.id_split.test)),
                        [(spec, SplitSet(list(s.train), list(s.valid), list(s.test))) for spec, s in sc.ood])


def test_c08_data_validity(tmp_path):
    specs = builtin_manifests()
    counts = []
    scenario = None
    for seed in range(LEAK_SEEDS):
        samples = gen_synthetic(SyntheticConfig(domains=specs, methods_per_domain=60, id_methods=300, seed=seed))
        scenario, _ = build_scenario(samples, specs, 30, 30, seed=seed)
        counts.append(len(leakage_check(scenario)["violations"]))

    detected = {}
    sc = _copy(scenario)
    leak = MethodSample(["Cipher", ".", "getInstance", "(", "STR", ")", ";", "//", "leak"],
                        [ApiSite(0, 2, 6, "java.security", "Cipher", "getInstance")])
    sc.id_split.train.append(leak)
    detected[DOMAIN_API_IN_ID] = leakage_check(sc)["violations"] == [(leak.content_hash, DOMAIN_API_IN_ID)]

    sc = _copy(scenario)
    both = MethodSample(["x"], [ApiSite(0, 0, 1, "java.math", "BigInteger", "add"),
                                ApiSite(0, 0, 1, "java.security", "Cipher", "init")])
    sc.ood[0][1].train.append(both)
    detected[MULTI_DOMAIN] = leakage_check(sc)["violations"] == [(both.content_hash, MULTI_DOMAIN)]

    sc = _copy(scenario)
    stray = sc.ood[1][1].test[0]
    sc.ood[0][1].valid.append(stray)
    detected[WRONG_DOMAIN] = (stray.content_hash, WRONG_DOMAIN) in leakage_check(sc)["violations"]

    sc = _copy(scenario)
    victim, donor = sc.ood[0][1].train[0], sc.ood[0][1].test[0]
    sc.ood[0][1].test[0] = MethodSample(donor.tokens, donor.sites, victim.content_hash, donor.domain)
    detected[CROSS_SPLIT_DUPLICATE] = leakage_check(sc)["violations"] == [(victim.content_hash,
                                                                             CROSS_SPLIT_DUPLICATE)]

    # the CLI path as well: a clean scenario passes, the Cipher leak exits with the data-error code
    clean = save_scenario(scenario, tmp_path / "clean")
    sc = load_scenario(clean)
    sc.id_split.train.append(leak)
    leaky = save_scenario(sc, tmp_path / "leaky")
    cli_ok = clforge(["validate", "--scenario", str(clean)]) == 0
    cli_ok &= clforge(["validate", "--scenario", str(leaky)]) == EXIT_DATA

    ok = sum(counts) == 0 and all(detected.values()) and cli_ok
    record(8, ok, f"violations over {LEAK_SEEDS} seeds: {sum(counts)}; injected codes detected: "
                  f"{', '.join(k for k, v in detected.items() if v)}; CLI exit codes {'ok' if cli_ok else 'WRONG'}")


# ---------------------------------------------------------------- 9

TOKENS = st.sampled_from(["a", "b", "c", "(", ")", "x", ".", "if", "return", "NUM", "STR", "=", ";", "{", "}"])
SEQ = st.lists(TOKENS, min_size=1, max_size=10)


def test_c09_metric_properties():
    failures = []

    @settings(max_examples=300, deadline=None, database=None)
    @given(st.lists(st.tuples(st.permutations(list("abcdefghij")), st.sampled_from(list("abcdefghijz"))),
                    min_size=1, max_size=8))
    def monotone(cases):
        cands, truths = [c for c, _ in cases], [t for _, t in cases]
        vals = [em_at_k(cands, truths, k) for k in range(1, 11)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 100.0 for v in vals)

    @settings(max_examples=300, deadline=None, database=None)
    @given(st.lists(st.tuples(SEQ, SEQ), min_size=1, max_size=6))
    def ranges(pairs):
        preds, truths = [p for p, _ in pairs], [t for _, t in pairs]
        for v in (bleu(preds, truths), codebleu_lite(preds, truths), exact_match(preds, truths)):
            assert 0.0 <= v <= 100.0 + 1e-9

    @settings(max_examples=300, deadline=None, database=None)
    @given(st.lists(SEQ, min_size=1, max_size=6))
    def em_implies_full(seqs):
        assert exact_match(seqs, seqs) == 100.0
        assert abs(bleu(seqs, seqs) - 100.0) < 1e-9
        assert abs(codebleu_lite(seqs, seqs) - 100.0) < 1e-9

    for prop in (monotone, ranges, em_implies_full):
        try:
            prop()
        except AssertionError as exc:
            failures.append(f"{prop.__name__}: {exc}")
    record(9, not failures, "em_at_k monotone, ranges in [0,100], EM=100 implies BLEU=CodeBLEU-lite=100"
           if not failures else "; ".join(failures))


# ---------------------------------------------------------------- 10

def test_c10_replay_and_zero_strength(desk):
    _, reports = desk
    rep = reports["decoder_replay"]
    cap = rep["strategy"]["params"]["buffer_size"]
    sizes = [r["buffer"] for r in rep["log"]]
    buffer_ok = all(0 < s <= cap for s in sizes)

    specs = builtin_manifests()[:3]
    samples = gen_synthetic(SyntheticConfig(domains=specs, methods_per_domain=40, id_methods=60, seed=7,
                                            length_range=(20, 40)))
    scenario, _ = build_scenario(samples, specs, 10, 10, seed=7)
    vocab = build_vocab([s.tokens for s in scenario.id_split.train] +
                        [s.tokens for _, sp in scenario.ood for s in sp.train], min_freq=1)
    cfg = ModelConfig(kind="decoder", vocab_size=vocab.size, layers=1, heads=2, embed_dim=16, ff_dim=32,
                      max_seq_len=64)
    sched = FinetuneSchedule(max_epochs=2, lr=3e-3)
    ev = EvalConfig(max_new=8, max_instances=10)

    def final(block):
        model = ModelState.init(cfg, seed=2)
        res = run_continual(model, vocab, scenario, S.make_strategy(block), sched, ev, Seeds(7, 7, 7))
        return model.flat(), res.matrices["EM@1"].values

    theta0, mat0 = final("naive")
    same = {}
    for block in ({"name": "ewc", "params": {"lam": 0.0}}, {"name": "si", "params": {"c": 0.0}},
                  {"name": "rwalk", "params": {"lam": 0.0}}):
        theta, mat = final(block)
        same[block["name"]] = np.array_equal(theta, theta0) and mat == mat0
    record(10, buffer_ok and all(same.values()),
           f"buffer sizes {sizes} (capacity {cap}); zero-strength bitwise equal to naive: {same}")


# ---------------------------------------------------------------- 11

def test_c11_budget(desk):
    secs = time.time() - SUITE_START
    res, _ = desk
    fresh = "decoder_naive" in res["timings"]
    record(11, secs < SUITE_SECONDS, f"acceptance suite {secs / 60:.1f} min on {os.cpu_count()} core(s)"
                                     + ("" if fresh else " (desk outputs reused from CLFORGE_DESK_DIR)"))
