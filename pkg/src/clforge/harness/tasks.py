from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

API_CALL, API_USAGE = "api_call", "api_usage"


@dataclass(frozen=True)
class TaskInstance:
    kind: str
    prefix: tuple     # method tokens preceding the site
    truth: tuple      # (method-name token,) or the usage-span tokens


def build_task_instances(split: Sequence, kind: str) -> tuple[list, int]:
    """One instance per API site; returns (instances, number of samples skipped for having no site)."""
    if kind not in (API_CALL, API_USAGE):
        raise ValueError(f"unknown task kind {kind!r}")
    out, skipped = [], 0
    for sample in split:
        if not sample.sites:
            skipped += 1
            continue
        toks = sample.tokens
        for site in sample.sites:
            if kind == API_CALL:
                out.append(TaskInstance(kind, tuple(toks[:site.call_index]), (toks[site.call_index],)))
            else:
                out.append(TaskInstance(kind, tuple(toks[:site.start]), tuple(toks[site.start:site.end])))
    return out, skipped
