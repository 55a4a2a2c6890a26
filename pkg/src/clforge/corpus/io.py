from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .types import DomainSpec, MethodSample, ScenarioData, SplitSet

TABLE1_ORDER = ("General", "Security", "Android", "Web", "Guava")


def write_jsonl(samples, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), separators=(",", ":")) + "\n")


def read_jsonl(path) -> list:
    with Path(path).open(encoding="utf-8") as fh:
        return [MethodSample.from_json(json.loads(line)) for line in fh if line.strip()]


def load_manifest(path) -> DomainSpec:
    return DomainSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_manifest(spec: DomainSpec, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(spec.to_json(), indent=2) + "\n", encoding="utf-8")


def builtin_manifests() -> list:
    """The five shipped domain manifests, in fine-tuning order."""
    root = resources.files("clforge.corpus") / "manifests"
    return [DomainSpec.from_json(json.loads((root / f"{name.lower()}.json").read_text()))
            for name in TABLE1_ORDER]


def load_manifest_dir(directory) -> list:
    """All ``*.json`` manifests in a directory; ordered by an ``order.json`` list if present."""
    directory = Path(directory)
    order_file = directory / "order.json"
    if order_file.exists():
        names = json.loads(order_file.read_text())
        return [load_manifest(directory / f"{n.lower()}.json") for n in names]
    specs = {p.stem: load_manifest(p) for p in sorted(directory.glob("*.json"))}
    known = [specs.pop(n.lower()) for n in TABLE1_ORDER if n.lower() in specs]
    return known + [specs[k] for k in sorted(specs)]


def save_scenario(scenario: ScenarioData, out_dir) -> Path:
    """Write split files plus ``scenario.json`` (paths relative to it)."""
    out = Path(out_dir)
    (out / "manifests").mkdir(parents=True, exist_ok=True)
    entry = {"id": {}, "domains": []}
    for name, part in scenario.id_split.parts().items():
        write_jsonl(part, out / f"id_{name}.jsonl")
        entry["id"][name] = f"id_{name}.jsonl"
    for k, (spec, split) in enumerate(scenario.ood, start=1):
        stem = f"ood{k}_{spec.name.lower()}"
        save_manifest(spec, out / "manifests" / f"{spec.name.lower()}.json")
        d = {"name": spec.name, "manifest": f"manifests/{spec.name.lower()}.json"}
        for name, part in split.parts().items():
            write_jsonl(part, out / f"{stem}_{name}.jsonl")
            d[name] = f"{stem}_{name}.jsonl"
        entry["domains"].append(d)
    path = out / "scenario.json"
    path.write_text(json.dumps(entry, indent=2) + "\n", encoding="utf-8")
    return path


def load_scenario(path) -> ScenarioData:
    path = Path(path)
    root = path.parent
    entry = json.loads(path.read_text(encoding="utf-8"))
    id_split = SplitSet(**{k: read_jsonl(root / v) for k, v in entry["id"].items()})
    ood = []
    for d in entry["domains"]:
        spec = load_manifest(root / d["manifest"])
        ood.append((spec, SplitSet(**{k: read_jsonl(root / d[k]) for k in ("train", "valid", "test") if k in d})))
    return ScenarioData(id_split, ood)
