"""Percentile bootstrap for the ratio estimators.

Records are resampled with replacement separately within each arm, so arm
sizes are preserved. Every estimator here is a function of per-arm sums of a
few per-record features, which lets a replicate be drawn as multinomial
counts over the distinct feature rows of an arm instead of materialising a
resampled dataset.

Replicate ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``, so
replicates can be computed in any order, or in parallel, with identical
results.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import estimators as est
from .data import ArmTraffic, ContingencyCounts, Dataset, Thresholds, build_counts, soft_counts
from .exceptions import BootstrapError, MissingSoftLabelError, UndefinedRatioError

__all__ = ["BootstrapConfig", "ESTIMATORS", "estimate", "bootstrap_ci", "replicate_values"]

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class BootstrapConfig:
    seed: int
    replicates: int = 1000
    level: float = 0.95
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed <= _MAX_SEED:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class _Spec:
    metric: str
    method: str
    soft: bool
    from_counts: Callable[..., float]
    needs_traffic: bool = False


ESTIMATORS = {
    "rrecall_direct": _Spec("rRecall", "direct", False, lambda c: est.rrecall_direct(c).point),
    "rfpr_direct": _Spec("rFPR", "direct", False, lambda c: est.rfpr_direct(c).point),
    "rrecall_approx": _Spec("rRecall", "approx", False, lambda c: est.rrecall_approx(c).point),
    "rfpr_approx": _Spec("rFPR", "approx", False, lambda c: est.rfpr_approx(c).point),
    "rfpr_abtest": _Spec("rFPR", "ab_test", False,
                         lambda c, t: est.rfpr_abtest(c, t).point, needs_traffic=True),
    "ss_rrecall": _Spec("rRecall", "semi_supervised", True, est.ss_rrecall_from_counts),
    "ss_rfpr": _Spec("rFPR", "semi_supervised", True, est.ss_rfpr_from_counts),
}


def _spec(name: str) -> _Spec:
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None


def _evaluate(spec: _Spec, counts: ContingencyCounts, traffic) -> float:
    if spec.needs_traffic:
        return spec.from_counts(counts, traffic)
    return spec.from_counts(counts)


def _full_counts(spec, dataset, thresholds):
    return soft_counts(dataset, thresholds) if spec.soft else build_counts(dataset, thresholds)


def estimate(name: str, dataset: Dataset, thresholds: Thresholds,
             traffic: ArmTraffic | None = None) -> est.RatioEstimate:
    """Point estimate of a named estimator on a dataset."""
    spec = _spec(name)
    if spec.needs_traffic and traffic is None:
        raise ValueError(f"{name} requires arm traffic")
    counts = _full_counts(spec, dataset, thresholds)
    return est.RatioEstimate(spec.metric, spec.method, _evaluate(spec, counts, traffic))


def _features(spec, dataset, thresholds, arm_mask):
    """Per-record ``(pos, neg, pos_cross, neg_cross)`` weights for one arm."""
    w = dataset.sampling_weight[arm_mask]
    if spec.soft:
        p = dataset.soft_tp_prob[arm_mask]
        if np.isnan(p).any():
            raise MissingSoftLabelError([str(i) for i in dataset.ids[arm_mask][np.isnan(p)]])
        pos, neg = w * p, w * (1.0 - p)
    else:
        lab = dataset.hard_label[arm_mask]
        pos = np.where(lab == 1, w, 0.0)
        neg = np.where(lab == 0, w, 0.0)
    cross = dataset.cross_accepted(thresholds)[arm_mask]
    return np.column_stack([pos, neg, np.where(cross, pos, 0.0), np.where(cross, neg, 0.0)])


class _ArmSampler:
    """Draws resampled feature sums for one arm."""

    def __init__(self, features: np.ndarray):
        self.n = len(features)
        self.rows, counts = np.unique(features, axis=0, return_counts=True)
        # few distinct rows (hard labels): multinomial over rows is cheapest;
        # many (soft labels): draw record indices directly
        self.grouped = len(self.rows) * 8 <= self.n
        if self.grouped:
            self.pvals = counts / self.n
        else:
            self.rows = features

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        if self.n == 0:
            return np.zeros(4)
        if self.grouped:
            k = rng.multinomial(self.n, self.pvals)
        else:
            k = np.bincount(rng.integers(0, self.n, self.n), minlength=self.n)
        return k @ self.rows


def replicate_values(dataset: Dataset, thresholds: Thresholds, estimator: str,
                     config: BootstrapConfig, traffic: ArmTraffic | None = None) -> np.ndarray:
    """Estimator value for every replicate, in replicate order; nan marks undefined."""
    spec = _spec(estimator)
    if spec.needs_traffic and traffic is None:
        raise ValueError(f"{estimator} requires arm traffic")
    samplers = (
        _ArmSampler(_features(spec, dataset, thresholds, ~dataset.is_b)),
        _ArmSampler(_features(spec, dataset, thresholds, dataset.is_b)),
    )

    def run(indices):
        out = np.empty(len(indices))
        for j, i in enumerate(indices):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(int(config.seed), spawn_key=(int(i),))))
            sums_a = samplers[0].draw(rng)
            sums_b = samplers[1].draw(rng)
            counts = ContingencyCounts.from_arm_sums(sums_a, sums_b)
            try:
                out[j] = _evaluate(spec, counts, traffic)
            except UndefinedRatioError:
                out[j] = np.nan
        return out

    idx = np.arange(config.replicates)
    if config.workers == 1:
        return run(idx)
    chunks = np.array_split(idx, config.workers)
    with ThreadPoolExecutor(config.workers) as pool:
        return np.concatenate(list(pool.map(run, chunks)))


def bootstrap_ci(dataset: Dataset, thresholds: Thresholds, estimator: str,
                 config: BootstrapConfig, traffic: ArmTraffic | None = None) -> est.RatioEstimate:
    """Point estimate with a percentile bootstrap interval.

    Parameters
    ----------
    dataset : Dataset
    thresholds : Thresholds
    estimator : str
        Key of :data:`ESTIMATORS`, e.g. ``"rfpr_approx"``.
    config : BootstrapConfig
    traffic : ArmTraffic, optional
        Required by ``rfpr_abtest``; held fixed across replicates.

    Returns
    -------
    RatioEstimate
        ``point`` is the full-sample value. ``replicates`` counts the
        replicates that were defined and ``undefined_replicates`` those that
        were dropped.

    Raises
    ------
    UndefinedRatioError
        The estimator is undefined on the full dataset.
    BootstrapError
        More than half of the replicates were undefined.
    """
    point = estimate(estimator, dataset, thresholds, traffic)
    values = replicate_values(dataset, thresholds, estimator, config, traffic)
    defined = values[~np.isnan(values)]
    n_undefined = len(values) - len(defined)
    if n_undefined * 2 > len(values):
        raise BootstrapError(
            f"{estimator}: {n_undefined} of {len(values)} replicates undefined; "
            "counts are too sparse, use the approx estimator instead"
        )
    tail = (1.0 - config.level) / 2.0
    lo, hi = np.quantile(defined, [tail, 1.0 - tail])
    # the percentile interval need not contain the full-sample value; widen minimally if not
    lo, hi = min(float(lo), point.point), max(float(hi), point.point)
    return est.RatioEstimate(
        point.metric, point.method, point.point,
        ci_low=lo, ci_high=hi, ci_level=config.level,
        replicates=len(defined), undefined_replicates=n_undefined,
    )
