from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

from ..numcore import Rng
from .types import DomainSpec, MethodSample, ScenarioData, SplitSet

DOMAIN_API_IN_ID = "domain API in ID"
MULTI_DOMAIN = "multi-domain sample"
CROSS_SPLIT_DUPLICATE = "cross-split duplicate"
WRONG_DOMAIN = "sample outside its domain"


class OverlappingDomainsError(ValueError):
    pass


def dedup(samples: Sequence[MethodSample]) -> list:
    seen = set()
    out = []
    for s in samples:
        if s.content_hash not in seen:
            seen.add(s.content_hash)
            out.append(s)
    return out


def domain_index(specs: Sequence[DomainSpec]) -> dict:
    index = {}
    for spec in specs:
        for entry in spec.entries:
            if entry in index:
                raise OverlappingDomainsError(
                    f"{entry[0]}.{entry[1]} listed in both {index[entry]!r} and {spec.name!r}")
            index[entry] = spec.name
    return index


def site_domains(sample: MethodSample, index: dict) -> set:
    return {index[(s.package, s.interface)] for s in sample.sites if (s.package, s.interface) in index}


def assign_domains(samples: Sequence[MethodSample], specs: Sequence[DomainSpec]):
    """Partition into (id_samples, {domain: samples}, discarded)."""
    index = domain_index(specs)
    id_samples = []
    per_domain = {spec.name: [] for spec in specs}
    discarded = []
    for s in samples:
        doms = site_domains(s, index)
        if not doms:
            id_samples.append(s)
        elif len(doms) == 1:
            (d,) = doms
            per_domain[d].append(MethodSample(s.tokens, s.sites, s.content_hash, d))
        else:
            discarded.append(s)
    return id_samples, per_domain, discarded


def _quota(n: int, fraction: float) -> int:
    # round guards against 30 * 0.1 == 3.0000000000000004
    return max(1, math.ceil(round(n * fraction, 9))) if n else 0


def split_ood(domain_samples: Sequence[MethodSample], spec: DomainSpec, test_fraction: float = 0.10,
              rng: Rng | None = None) -> SplitSet:
    """Per-API test selection; a sample picked through several APIs lands in test once."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if not domain_samples:
        raise ValueError(f"domain {spec.name!r} has no samples")
    rng = rng or Rng(0)
    by_api = defaultdict(list)
    for idx, s in enumerate(domain_samples):
        for api in sorted({site.api for site in s.sites if spec.matches(site)}):
            by_api[api].append(idx)
    test_idx = set()
    for n_api, api in enumerate(sorted(by_api)):
        members = by_api[api]
        k = _quota(len(members), test_fraction)
        picks = rng.child(n_api).choice(len(members), size=k, replace=False)
        test_idx.update(members[p] for p in picks)
    train = [s for i, s in enumerate(domain_samples) if i not in test_idx]
    test = [s for i, s in enumerate(domain_samples) if i in test_idx]
    return SplitSet(train=train, valid=[], test=test)


def split_id(samples: Sequence[MethodSample], n_test: int, n_valid: int, rng: Rng | None = None) -> SplitSet:
    if n_test < 0 or n_valid < 0:
        raise ValueError("split sizes must be non-negative")
    if n_test + n_valid >= len(samples):
        raise ValueError(f"need more than {n_test + n_valid} samples, got {len(samples)}")
    rng = rng or Rng(0)
    perm = rng.permutation(len(samples))
    test_idx = set(perm[:n_test].tolist())
    valid_idx = set(perm[n_test:n_test + n_valid].tolist())
    return SplitSet(
        train=[s for i, s in enumerate(samples) if i not in test_idx and i not in valid_idx],
        valid=[s for i, s in enumerate(samples) if i in valid_idx],
        test=[s for i, s in enumerate(samples) if i in test_idx],
    )


def carve_validation(train: Sequence, fraction: float, rng: Rng) -> tuple[list, list]:
    """Hold out ``ceil(fraction * n)`` items (at least one when n > 1) for validation."""
    n = len(train)
    k = min(max(1, math.ceil(round(n * fraction, 9))), n - 1) if n > 1 else 0
    held = set(rng.permutation(n)[:k].tolist())
    return ([s for i, s in enumerate(train) if i not in held],
            [s for i, s in enumerate(train) if i in held])


def build_scenario(samples: Sequence[MethodSample], specs: Sequence[DomainSpec], id_test: int,
                   id_valid: int, seed: int, test_fraction: float = 0.10) -> tuple[ScenarioData, dict]:
    """dedup -> assign_domains -> split_id / split_ood. Returns the scenario and a tally."""
    rng = Rng(seed)
    uniq = dedup(samples)
    id_samples, per_domain, discarded = assign_domains(uniq, specs)
    id_split = split_id(id_samples, id_test, id_valid, rng.child(0))
    ood = [(spec, split_ood(per_domain[spec.name], spec, test_fraction, rng.child(1, k)))
           for k, spec in enumerate(specs)]
    tally = {"input": len(samples), "unique": len(uniq), "id": len(id_samples),
             "discarded": len(discarded), **{s.name: len(per_domain[s.name]) for s in specs}}
    return ScenarioData(id_split, ood), tally


def leakage_check(scenario: ScenarioData) -> dict:
    specs = scenario.domains
    index = domain_index(specs)
    violations = []
    for part in scenario.id_split.parts().values():
        for s in part:
            if site_domains(s, index):
                violations.append((s.content_hash, DOMAIN_API_IN_ID))
    for spec, split in scenario.ood:
        for part in split.parts().values():
            for s in part:
                doms = site_domains(s, index)
                if len(doms) > 1:
                    violations.append((s.content_hash, MULTI_DOMAIN))
                elif doms != {spec.name}:
                    violations.append((s.content_hash, WRONG_DOMAIN))
    owner = {}
    splits = [("id", name, part) for name, part in scenario.id_split.parts().items()]
    splits += [(spec.name, name, part) for spec, split in scenario.ood for name, part in split.parts().items()]
    for dom, name, part in splits:
        for s in part:
            where = (dom, name)
            prev = owner.setdefault(s.content_hash, where)
            if prev != where:
                violations.append((s.content_hash, CROSS_SPLIT_DUPLICATE))
    return {"violations": violations}
