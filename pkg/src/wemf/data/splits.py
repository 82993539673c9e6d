from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .rng import Rng

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class SplitManifest:
    train: list[str] = field(default_factory=list)
    val: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def split_of(self, case_id: str) -> str:
        for name in SPLIT_NAMES:
            if case_id in getattr(self, name):
                return name
        raise KeyError(case_id)


def _split_sizes(n: int, ratios) -> list[int]:
    # largest-remainder apportionment
    exact = [n * r for r in ratios]
    sizes = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    # every split with a positive ratio gets at least one case
    for i, r in enumerate(ratios):
        if r > 0 and sizes[i] == 0:
            donor = max(range(len(sizes)), key=lambda j: sizes[j])
            sizes[donor] -= 1
            sizes[i] += 1
    return sizes


def make_splits(case_ids, ratios=(0.77, 0.08, 0.15), seed: int = 0) -> SplitManifest:
    """Deterministic case-level shuffle-and-partition into train/val/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    case_ids = list(case_ids)
    if len(set(case_ids)) != len(case_ids):
        raise ValueError("duplicate case ids")
    nonempty = sum(r > 0 for r in ratios)
    if len(case_ids) < nonempty:
        raise ValueError(f"{len(case_ids)} cases cannot fill {nonempty} non-empty splits")
    order = Rng(seed).shuffle(sorted(case_ids))
    sizes = _split_sizes(len(order), ratios)
    a, b = sizes[0], sizes[0] + sizes[1]
    return SplitManifest(order[:a], order[a:b], order[b:])


def write_manifest(path, cases: list[dict], splits: SplitManifest, **extra) -> None:
    doc = {"cases": cases, "splits": asdict(splits), **extra}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> tuple[list[dict], SplitManifest, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    splits = SplitManifest(**doc.pop("splits"))
    cases = doc.pop("cases")
    return cases, splits, doc
