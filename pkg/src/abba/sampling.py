"""Neyman allocation of an annotation budget across strata.

Typical strata are the records on which the two models agree and those on
which they disagree; disagreements are rarer but have a higher FPR, so they
deserve more than their proportional share of annotations.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Thresholds
from .exceptions import ConfigError

__all__ = [
    "StratumSpec",
    "AllocationPlan",
    "neyman_allocate",
    "efficiency",
    "derive_weights",
    "load_strata",
    "agreement_strata",
    "apply_stratum_weights",
]

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class StratumSpec:
    name: str
    weight: float
    expected_fpr: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"stratum {self.name!r}: weight {self.weight} outside [0, 1]", "weight")
        if not 0.0 < self.expected_fpr < 1.0:
            raise ConfigError(
                f"stratum {self.name!r}: expected_fpr {self.expected_fpr} outside (0, 1)",
                "expected_fpr")

    @property
    def sd(self) -> float:
        return math.sqrt(self.expected_fpr * (1.0 - self.expected_fpr))


@dataclass(frozen=True)
class AllocationPlan:
    budget: int
    allocation: dict[str, int]
    fractions: dict[str, float]
    efficiency: float
    overall_p: float
    p_source: str  # "pooled" or "override"

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "allocation": dict(self.allocation),
            "fractions": dict(self.fractions),
            "efficiency": self.efficiency,
            "overall_p": self.overall_p,
            "p_source": self.p_source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        return cls(int(d["budget"]), {k: int(v) for k, v in d["allocation"].items()},
                   dict(d["fractions"]), d["efficiency"], d["overall_p"], d["p_source"])


def _check_strata(strata: Sequence[StratumSpec]) -> None:
    if not strata:
        raise ConfigError("at least one stratum is required", "strata")
    names = [s.name for s in strata]
    if len(set(names)) != len(names):
        raise ConfigError("stratum names must be unique", "name")
    total = math.fsum(s.weight for s in strata)
    if abs(total - 1.0) > _SUM_TOL:
        raise ConfigError(f"stratum weights sum to {total}, not 1", "weight")


def load_strata(source) -> list[StratumSpec]:
    """Parse a JSON array of ``{name, weight, expected_fpr}`` objects."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            raw = json.load(fh)
    elif isinstance(source, str):
        raw = json.loads(source)
    else:
        raw = source
    if not isinstance(raw, list):
        raise ConfigError("strata must be a JSON array", "strata")
    out = []
    for i, item in enumerate(raw):
        try:
            out.append(StratumSpec(str(item["name"]), float(item["weight"]), float(item["expected_fpr"])))
        except KeyError as exc:
            raise ConfigError(f"stratum {i}: missing field {exc.args[0]!r}", exc.args[0]) from None
    _check_strata(out)
    return out


def efficiency(strata: Sequence[StratumSpec], overall_p: float | None = None) -> float:
    """Fractional variance reduction of stratified over simple random sampling.

    ``1 - (sum_j w_j sd_j)^2 / (p (1 - p))`` where ``p`` is the pooled FPR
    ``sum_j w_j p_j`` unless ``overall_p`` is given.
    """
    _check_strata(strata)
    p = math.fsum(s.weight * s.expected_fpr for s in strata) if overall_p is None else overall_p
    if not 0.0 < p < 1.0:
        raise ConfigError(f"overall p {p} outside (0, 1)", "overall_p")
    spread = math.fsum(s.weight * s.sd for s in strata)
    return 1.0 - spread**2 / (p * (1.0 - p))


def _largest_remainder(exact: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(exact).astype(int)
    short = total - int(base.sum())
    if short > 0:
        # stable order so ties go to the earlier stratum
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
    return base


def neyman_allocate(budget: int, strata: Sequence[StratumSpec],
                    overall_p: float | None = None) -> AllocationPlan:
    """Split ``budget`` annotations across strata by Neyman allocation.

    Stratum ``j`` receives a share proportional to ``w_j sqrt(p_j (1 - p_j))``.
    Integer counts are obtained by largest-remainder rounding so they add up
    to ``budget`` exactly.

    Parameters
    ----------
    budget : int
        Total annotations; at least the number of strata.
    strata : sequence of StratumSpec
    overall_p : float, optional
        Overall FPR for the efficiency figure. Defaults to the pooled value
        implied by the strata.
    """
    _check_strata(strata)
    if int(budget) != budget or budget < len(strata):
        raise ConfigError(f"budget must be an integer >= {len(strata)}, got {budget}", "budget")
    budget = int(budget)
    raw = np.array([s.weight * s.sd for s in strata])
    if raw.sum() == 0:
        raise ConfigError("all strata have zero weight", "weight")
    fractions = raw / raw.sum()
    counts = _largest_remainder(fractions * budget, budget)
    pooled = math.fsum(s.weight * s.expected_fpr for s in strata)
    p = pooled if overall_p is None else float(overall_p)
    return AllocationPlan(
        budget=budget,
        allocation={s.name: int(c) for s, c in zip(strata, counts)},
        fractions={s.name: float(f) for s, f in zip(strata, fractions)},
        efficiency=efficiency(strata, p),
        overall_p=p,
        p_source="pooled" if overall_p is None else "override",
    )


def derive_weights(plan: AllocationPlan, strata: Sequence[StratumSpec],
                   annotated_counts: Mapping[str, int] | None = None,
                   population: int | None = None,
                   stratum_sizes: Mapping[str, int] | None = None) -> dict[str, float]:
    """Inverse-probability weight for the annotated records of each stratum.

    The weight of stratum ``j`` is its population share over its annotated
    share, so weighted counts are proportional to population counts. With
    ``population`` (total records) the weights become ``N_j / n_j`` and the
    weighted counts estimate the population counts themselves.

    ``annotated_counts`` defaults to the plan's allocation.
    """
    _check_strata(strata)
    counts = dict(plan.allocation if annotated_counts is None else annotated_counts)
    if stratum_sizes is not None:
        over = [k for k, v in counts.items() if v > stratum_sizes.get(k, math.inf)]
        if over:
            raise ValueError(f"annotated count exceeds stratum size for {over}")
    total = sum(counts.get(s.name, 0) for s in strata)
    weights = {}
    for s in strata:
        n_j = counts.get(s.name, 0)
        if n_j <= 0:
            if s.weight > 0:
                raise ValueError(f"stratum {s.name!r} is non-empty but has no annotations")
            weights[s.name] = 0.0
            continue
        if population is None:
            weights[s.name] = s.weight / (n_j / total)
        else:
            weights[s.name] = s.weight * population / n_j
    return weights


def agreement_strata(dataset: Dataset, thresholds: Thresholds,
                     agree: str = "agree", disagree: str = "disagree") -> Dataset:
    """Tag each record by whether the non-collecting model also accepted it."""
    cross = dataset.cross_accepted(thresholds)
    return dataset.with_strata(np.where(cross, agree, disagree).astype(object))


def apply_stratum_weights(dataset: Dataset, weights: Mapping[str, float]) -> Dataset:
    """Set ``sampling_weight`` of every record from its stratum."""
    missing = sorted(set(map(str, dataset.stratum)) - set(weights))
    if missing:
        raise KeyError(f"no weight for strata {missing}")
    return dataset.with_weights([weights[str(s)] for s in dataset.stratum])
