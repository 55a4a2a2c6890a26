import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clforge.corpus import (CROSS_SPLIT_DUPLICATE, DOMAIN_API_IN_ID, MULTI_DOMAIN, ApiSite, DomainSpec, LexError,
                            MethodSample, ScenarioData, SplitSet, SyntheticConfig, assign_domains, build_scenario,
                            builtin_manifests, carve_validation, dedup, extract_api_usages, extract_file,
                            gen_synthetic, leakage_check, lex_java, load_scenario, parse_imports, save_scenario,
                            split_id, split_methods, split_ood)
from clforge.corpus.io import TABLE1_ORDER
from clforge.corpus.pipeline import OverlappingDomainsError
from clforge.numcore import Rng

DATA = Path(__file__).parent / "data"
GENERAL = DomainSpec("General", (("java.math", "BigInteger"),))
SECURITY = DomainSpec("Security", (("java.security", "Cipher"),))


# ---------------------------------------------------------------- lexer

def test_lex_simple_statement():
    assert lex_java("int x = 1; // hi") == ["int", "x", "=", "NUM", ";"]


def test_lex_empty():
    assert lex_java("") == []


def test_lex_golden_method():
    src = (DATA / "golden_method.java").read_text()
    assert lex_java(src) == json.loads((DATA / "golden_method.tokens.json").read_text())


@pytest.mark.parametrize("src,line", [('int a;\nString s = "open;\n', 2), ("a();\n\n/* never closed", 3),
                                      ("char c = 'x;", 1)])
def test_lex_unterminated_reports_line(src, line):
    with pytest.raises(LexError) as exc:
        lex_java(src)
    assert exc.value.line == line


def test_lex_operators_longest_match():
    assert lex_java("a >>>= b -> c :: d") == ["a", ">>>=", "b", "->", "c", "::", "d"]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["foo", "Bar", "(", ")", "{", "}", ";", "=", "+", "1", "2.5", '"s"', "x"]),
                max_size=30))
def test_lex_is_whitespace_insensitive(words):
    assert lex_java(" ".join(words)) == lex_java("\n  ".join(words))


# ---------------------------------------------------------------- extraction

def toks(src):
    return lex_java(src)


def test_extract_biginteger_site():
    t = toks("BigInteger x = y.add(z); x.add(z);")
    s = extract_api_usages(t, {"BigInteger": "java.math.BigInteger"}, [GENERAL])
    assert [(x.package, x.interface, x.method) for x in s.sites] == [("java.math", "BigInteger", "add")]
    site = s.sites[0]
    assert t[site.call_index] == "add"
    assert t[site.start:site.end] == ["x", ".", "add", "(", "z", ")"]


def test_extract_unresolved_and_constructor():
    s = extract_api_usages(toks("Foo f = new Foo(); f.bar();"), {}, [])
    assert s.sites == []


def test_extract_static_call():
    t = toks("Cipher c = Cipher.getInstance(\"AES\");")
    s = extract_api_usages(t, {"Cipher": "java.security.Cipher"}, [SECURITY])
    assert [(x.interface, x.method) for x in s.sites] == [("Cipher", "getInstance")]
    assert s.sites[0].package == "java.security"


def test_extract_nested_spans_are_disjoint():
    t = toks("BigInteger a; BigInteger b; a.add(b.negate());")
    s = extract_api_usages(t, {"BigInteger": "java.math.BigInteger"}, [GENERAL])
    assert [x.method for x in s.sites] == ["add"]


def test_extract_skips_chained_calls():
    t = toks("BigInteger a; a.add(b).negate();")
    s = extract_api_usages(t, {"BigInteger": "java.math.BigInteger"})
    assert [x.method for x in s.sites] == ["add"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["a . add ( x ) ;", "BigInteger.valueOf(1);", "q = r;", "a . add ( a . negate ( ) ) ;",
                                 "foo(a);"]), max_size=8))
def test_site_invariants(stmts):
    t = toks("BigInteger a; " + " ".join(stmts))
    s = extract_api_usages(t, {"BigInteger": "java.math.BigInteger"})
    last_end = 0
    for site in s.sites:
        assert 0 <= site.start <= site.call_index < site.end <= len(t)
        assert site.start >= last_end
        last_end = site.end


def test_parse_imports_and_split_methods():
    src = """
    package p;
    import java.math.BigInteger;
    import java.util.*;
    import static java.lang.Math.max;
    class A {
        int f;
        A() { f = 1; }
        int g(BigInteger x) throws Exception { return x.signum(); }
        class Inner { void h() { Runnable r = () -> { go(); }; } }
    }
    """
    t = lex_java(src)
    assert parse_imports(t) == {"BigInteger": "java.math.BigInteger"}
    methods = split_methods(t)
    assert [m[:3] for m in methods] == [["A", "(", ")"], ["int", "g", "("], ["void", "h", "("]]
    samples = extract_file(src, [GENERAL])
    assert [len(s.sites) for s in samples] == [0, 1, 0]


# ---------------------------------------------------------------- dedup / domains

def _sample(src, imports=None):
    return extract_api_usages(toks(src), imports or {}, [])


def test_dedup_comments_and_whitespace():
    a = _sample("int x = 1; // one")
    b = _sample("int   x =\n 1; /* two */")
    c = _sample("int y = 1;")
    assert len(dedup([a, b])) == 1
    assert len(dedup([a, c])) == 2


def test_dedup_forced_duplicates():
    base = [_sample(f"int v{i} = {i};") for i in range(900)]
    dupes = [base[i * 9] for i in range(100)]
    assert len(dedup(base + dupes)) == 900


IMPORTS = {"BigInteger": "java.math.BigInteger", "Cipher": "java.security.Cipher"}


def test_assign_domains():
    big = _sample("BigInteger a; a.add(b);", IMPORTS)
    both = _sample("BigInteger a; a.add(b); Cipher.getInstance(s);", IMPORTS)
    plain = _sample("int q = 2;", IMPORTS)
    ids, per, dropped = assign_domains([big, both, plain], [GENERAL, SECURITY])
    assert ids == [plain]
    assert [s.content_hash for s in per["General"]] == [big.content_hash]
    assert per["Security"] == []
    assert dropped == [both]


def test_overlapping_specs_raise():
    with pytest.raises(OverlappingDomainsError):
        assign_domains([], [GENERAL, DomainSpec("Other", (("java.math", "BigInteger"),))])


def test_domain_spec_unique_interfaces():
    with pytest.raises(ValueError):
        DomainSpec("X", (("a", "Foo"), ("b", "Foo")))


# ---------------------------------------------------------------- splits

def _api_samples(spec_entries, per_api):
    out = []
    for pkg, iface in spec_entries:
        for k in range(per_api):
            t = [iface, ".", "m", "(", f"v{k}", ")", ";"]
            out.append(MethodSample(t, [ApiSite(0, 2, 6, pkg, iface, "m")]))
    return out


def test_split_ood_ten_samples_one_test():
    spec = DomainSpec("D", (("p", "A"),))
    s = split_ood(_api_samples(spec.entries, 10), spec, 0.1, Rng(0))
    assert (len(s.train), len(s.test)) == (9, 1)


def test_split_ood_single_sample_goes_to_test():
    spec = DomainSpec("D", (("p", "A"),))
    s = split_ood(_api_samples(spec.entries, 1), spec, 0.1, Rng(0))
    assert (len(s.train), len(s.test)) == (0, 1)


def test_split_ood_three_apis():
    spec = DomainSpec("D", (("p", "A"), ("p", "B"), ("p", "C")))
    s = split_ood(_api_samples(spec.entries, 40), spec, 0.1, Rng(3))
    assert (len(s.train), len(s.test)) == (108, 12)
    for iface in "ABC":
        assert sum(x.sites[0].interface == iface for x in s.test) == 4


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(0, 1000))
def test_split_ood_quota_property(n, seed):
    spec = DomainSpec("D", (("p", "A"),))
    s = split_ood(_api_samples(spec.entries, n), spec, 0.1, Rng(seed))
    assert len(s.test) == max(1, math.ceil(round(n * 0.1, 9)))
    assert len(s.train) + len(s.test) == n


def test_split_ood_empty_raises():
    with pytest.raises(ValueError):
        split_ood([], DomainSpec("D", (("p", "A"),)))


def test_split_id_sizes_and_determinism():
    samples = [_sample(f"int v{i};") for i in range(1000)]
    s = split_id(samples, 100, 50, Rng(42))
    assert (len(s.train), len(s.valid), len(s.test)) == (850, 50, 100)
    again = split_id(samples, 100, 50, Rng(42))
    assert [x.content_hash for x in s.test] == [x.content_hash for x in again.test]
    assert split_id(samples, 0, 10, Rng(0)).test == []
    with pytest.raises(ValueError):
        split_id(samples[:10], 8, 2)


def test_carve_validation_disjoint_and_stable():
    items = list(range(37))
    tr, va = carve_validation(items, 0.1, Rng(5))
    assert len(va) == 4 and not set(tr) & set(va) and sorted(tr + va) == items
    assert carve_validation(items, 0.1, Rng(5)) == (tr, va)


# ---------------------------------------------------------------- synthetic corpus

def test_builtin_manifests_follow_table_order():
    specs = builtin_manifests()
    assert [s.name for s in specs] == list(TABLE1_ORDER)
    general = dict((i, p) for p, i in specs[0].entries)
    assert general["BigInteger"] == "java.math"
    assert ("java.security", "Cipher") in specs[1].entries


def test_gen_synthetic_domains_are_pure():
    specs = builtin_manifests()
    samples = gen_synthetic(SyntheticConfig(domains=specs, methods_per_domain=200, id_methods=300, seed=4))
    ids, per, dropped = assign_domains(samples, specs)
    assert dropped == []
    assert {k: len(v) for k, v in per.items()} == {s.name: 200 for s in specs}
    assert len(ids) == 300


def test_gen_synthetic_pure_id():
    specs = builtin_manifests()
    samples = gen_synthetic(SyntheticConfig(domains=specs, methods_per_domain=0, id_methods=50, seed=1))
    ids, per, _ = assign_domains(samples, specs)
    assert len(ids) == 50 and all(not v for v in per.values())


def test_gen_synthetic_deterministic():
    cfg = dict(domains=builtin_manifests()[:2], methods_per_domain=20, id_methods=20, seed=9)
    a = [s.content_hash for s in gen_synthetic(SyntheticConfig(**cfg))]
    b = [s.content_hash for s in gen_synthetic(SyntheticConfig(**cfg))]
    assert a == b and len(set(a)) == len(a)


def test_gen_synthetic_overlap_raises():
    dup = DomainSpec("Dup", (builtin_manifests()[0].entries[0],))
    with pytest.raises(ValueError, match="overlapping"):
        gen_synthetic(SyntheticConfig(domains=[builtin_manifests()[0], dup], methods_per_domain=1, id_methods=1))


# ---------------------------------------------------------------- leakage

@pytest.fixture(scope="module")
def small_scenario():
    specs = builtin_manifests()
    samples = gen_synthetic(SyntheticConfig(domains=specs, methods_per_domain=40, id_methods=200, seed=2))
    scenario, tally = build_scenario(samples, specs, 20, 20, seed=2)
    return scenario


def test_pipeline_scenario_is_clean(small_scenario):
    assert leakage_check(small_scenario)["violations"] == []


def _copy(sc: ScenarioData) -> ScenarioData:
    return ScenarioData(SplitSet(list(sc.id_split.train), list(sc.id_split.valid), list(sc.id_split.test)),
                        [(spec, SplitSet(list(s.train), list(s.valid), list(s.test))) for spec, s in sc.ood])


def test_injected_domain_api_in_id(small_scenario):
    sc = _copy(small_scenario)
    cipher = MethodSample(["Cipher", ".", "getInstance", "(", "STR", ")", ";", "//", "injected"],
                          [ApiSite(0, 2, 6, "java.security", "Cipher", "getInstance")])
    sc.id_split.train.append(cipher)
    assert leakage_check(sc)["violations"] == [(cipher.content_hash, DOMAIN_API_IN_ID)]


def test_injected_cross_split_duplicate(small_scenario):
    sc = _copy(small_scenario)
    victim = sc.ood[0][1].train[0]
    donor = sc.ood[1][1].test[0]
    sc.ood[1][1].test[0] = MethodSample(donor.tokens, donor.sites, victim.content_hash, donor.domain)
    assert leakage_check(sc)["violations"] == [(victim.content_hash, CROSS_SPLIT_DUPLICATE)]


def test_injected_multi_domain(small_scenario):
    sc = _copy(small_scenario)
    both = MethodSample(["x"], [ApiSite(0, 0, 1, "java.math", "BigInteger", "add"),
                                ApiSite(0, 0, 1, "java.security", "Cipher", "init")])
    sc.ood[0][1].train.append(both)
    assert leakage_check(sc)["violations"] == [(both.content_hash, MULTI_DOMAIN)]


def test_scenario_round_trip(tmp_path, small_scenario):
    path = save_scenario(small_scenario, tmp_path)
    back = load_scenario(path)
    assert [s.name for s in back.domains] == list(TABLE1_ORDER)
    for (_, a), (_, b) in zip(small_scenario.ood, back.ood):
        assert [x.content_hash for x in a.test] == [x.content_hash for x in b.test]
        assert [x.sites for x in a.train] == [x.sites for x in b.train]
