from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class ApiSite:
    start: int
    call_index: int
    end: int
    package: str
    interface: str
    method: str

    @property
    def api(self) -> tuple[str, str]:
        return (self.interface, self.method)

    def to_json(self) -> dict:
        return {"start": self.start, "call": self.call_index, "end": self.end,
                "package": self.package, "interface": self.interface, "method": self.method}

    @classmethod
    def from_json(cls, d: dict) -> "ApiSite":
        return cls(d["start"], d["call"], d["end"], d["package"], d["interface"], d["method"])


def content_hash(tokens) -> str:
    return hashlib.sha256(" ".join(tokens).encode("utf-8")).hexdigest()


@dataclass
class MethodSample:
    tokens: list
    sites: list = field(default_factory=list)
    content_hash: str = ""
    domain: Optional[str] = None

    def __post_init__(self):
        if not self.content_hash:
            self.content_hash = content_hash(self.tokens)
        self.sites = sorted(self.sites, key=lambda s: s.call_index)

    def to_json(self) -> dict:
        return {"tokens": list(self.tokens), "sites": [s.to_json() for s in self.sites],
                "hash": self.content_hash, "domain": self.domain}

    @classmethod
    def from_json(cls, d: dict) -> "MethodSample":
        return cls(list(d["tokens"]), [ApiSite.from_json(s) for s in d["sites"]],
                   d.get("hash") or "", d.get("domain"))


@dataclass(frozen=True)
class DomainSpec:
    name: str
    entries: tuple  # of (package, interface)

    def __post_init__(self):
        entries = tuple((p, i) for p, i in self.entries)
        object.__setattr__(self, "entries", entries)
        names = [i for _, i in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"interface names not unique in domain spec {self.name!r}")

    def matches(self, site: ApiSite) -> bool:
        return (site.package, site.interface) in self.entries

    def to_json(self) -> dict:
        return {"name": self.name,
                "entries": [{"package": p, "interface": i} for p, i in self.entries]}

    @classmethod
    def from_json(cls, d: dict) -> "DomainSpec":
        return cls(d["name"], tuple((e["package"], e["interface"]) for e in d["entries"]))


@dataclass
class SplitSet:
    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def parts(self) -> dict:
        return {"train": self.train, "valid": self.valid, "test": self.test}


@dataclass
class ScenarioData:
    id_split: SplitSet
    ood: list  # of (DomainSpec, SplitSet)

    @property
    def domains(self) -> list:
        return [spec for spec, _ in self.ood]

    @property
    def T(self) -> int:
        return len(self.ood)
