"""Scaled training subsets for the unified-corpus data-scaling experiments.

Both mixing strategies draw exactly ``sum_d floor(f * N_d)`` utterances, so a
Total-mixing and a Ratio-mixing subset at the same fraction are the same size.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .corpus import Corpus, address

log = logging.getLogger(__name__)

TOTAL = "total"
RATIO = "ratio"
SINGLE = "single"
STRATEGIES = (TOTAL, RATIO, SINGLE)
DEFAULT_FRACTIONS = tuple(Fraction(1, 2**k) for k in range(7))

Address = tuple[str, str, int]


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 20)
    return Fraction(str(value))


@dataclass(frozen=True)
class MixPlan:
    strategy: str
    fraction: Fraction
    seed: int = 0
    dataset: str | None = None  # only for strategy == "single"

    def __post_init__(self):
        object.__setattr__(self, "fraction", as_fraction(self.fraction))
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        if (self.strategy == SINGLE) != (self.dataset is not None):
            raise ValueError("a dataset is required for, and only for, the single strategy")

    @property
    def plan_id(self) -> str:
        f = f"{self.fraction.numerator}-{self.fraction.denominator}"
        name = self.strategy if self.dataset is None else f"single-{self.dataset}"
        return f"{name}_{f}_s{self.seed}"

    def to_json(self) -> dict:
        return {"strategy": self.strategy, "fraction": str(self.fraction), "seed": self.seed, "dataset": self.dataset}

    @classmethod
    def from_json(cls, obj: dict) -> MixPlan:
        return cls(obj["strategy"], Fraction(obj["fraction"]), obj.get("seed", 0), obj.get("dataset"))


def pools_by_dataset(corpus: Corpus, split: str | None = "train") -> dict[str, list[Address]]:
    pools: dict[str, list[Address]] = {}
    for conv, u in corpus.iter_utterances():
        if split is not None and conv.split != split:
            continue
        pools.setdefault(conv.dataset_id, []).append(address(conv, u))
    for pool in pools.values():
        pool.sort()
    return pools


def quota(fraction: Fraction, n: int) -> int:
    return math.floor(as_fraction(fraction) * n)


def sample(corpus: Corpus, plan: MixPlan, *, split: str | None = "train") -> list[Address]:
    """Draw the subset of utterance addresses for ``plan``, in seeded shuffled order."""
    pools = pools_by_dataset(corpus, split)
    f = plan.fraction
    if plan.strategy == SINGLE:
        if plan.dataset not in pools:
            raise KeyError(f"dataset {plan.dataset!r} not in corpus")
        pools = {plan.dataset: pools[plan.dataset]}

    if plan.strategy == TOTAL:
        target = sum(quota(f, len(p)) for p in pools.values())
        merged = sorted(itertools.chain.from_iterable(pools.values()))
        picked = random.Random(f"{plan.seed}:total").sample(merged, target)
    else:
        picked = []
        for ds in sorted(pools):
            k = quota(f, len(pools[ds]))
            if k == 0:
                log.warning("fraction %s leaves no samples from %s", f, ds)
                continue
            picked.extend(random.Random(f"{plan.seed}:{plan.strategy}:{ds}").sample(pools[ds], k))
    random.Random(f"{plan.seed}:order:{plan.plan_id}").shuffle(picked)
    return picked


def plan_grid(
    fractions: Sequence = DEFAULT_FRACTIONS,
    strategies: Sequence[str] = (TOTAL, RATIO),
    seed: int = 0,
    datasets: Sequence[str] = (),
) -> list[MixPlan]:
    """Fraction-major product of fractions x strategies; ``single`` expands over ``datasets``."""
    plans = []
    for f in fractions:
        for s in strategies:
            if s == SINGLE:
                plans.extend(MixPlan(SINGLE, f, seed, ds) for ds in datasets)
            else:
                plans.append(MixPlan(s, f, seed))
    return plans


def composition(addresses: Sequence[Address]) -> dict[str, int]:
    out: dict[str, int] = {}
    for ds, _, _ in addresses:
        out[ds] = out.get(ds, 0) + 1
    return dict(sorted(out.items()))


def subset_manifest(plan: MixPlan, addresses: Sequence[Address], **extra) -> dict:
    return {
        "plan": plan.to_json(),
        "plan_id": plan.plan_id,
        "size": len(addresses),
        "composition": composition(addresses),
        "addresses": [list(a) for a in sorted(addresses)],
        **extra,
    }


def write_subset_manifest(path, plan: MixPlan, addresses: Sequence[Address], **extra) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(subset_manifest(plan, addresses, **extra), fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def read_subset_manifest(path) -> tuple[MixPlan, list[Address]]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return MixPlan.from_json(obj["plan"]), [tuple(a) for a in obj["addresses"]]
