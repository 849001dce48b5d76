"""Relative recall / relative FPR estimators.

All ratios are candidate (B) over baseline (A). The direct estimators use the
per-arm cross-acceptance rates only. The approximate estimators pool the
jointly accepted records of both arms, assuming the TP:FP mix among records
accepted by both models is the same in either arm; this trades a little bias
for much lower variance when false positives are rare.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import ArmTraffic, ContingencyCounts, Dataset, Thresholds, build_counts, soft_counts
from .exceptions import UndefinedRatioError

__all__ = [
    "RatioEstimate",
    "Region",
    "SweepRow",
    "rrecall_direct",
    "rfpr_direct",
    "rrecall_approx",
    "rfpr_approx",
    "rfpr_abtest",
    "ss_rrecall",
    "ss_rfpr",
    "base_metrics",
    "threshold_sweep",
    "select_threshold",
]

METRICS = ("rRecall", "rFPR")
METHODS = ("direct", "approx", "semi_supervised", "ab_test")


@dataclass(frozen=True)
class RatioEstimate:
    metric: str
    method: str
    point: float
    ci_low: float | None = None
    ci_high: float | None = None
    ci_level: float | None = None
    replicates: int | None = None
    undefined_replicates: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.ci_low is not None and not self.ci_low <= self.point <= self.ci_high:
            raise ValueError(f"interval [{self.ci_low}, {self.ci_high}] excludes point {self.point}")

    @property
    def has_ci(self) -> bool:
        return self.ci_low is not None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RatioEstimate":
        return cls(**d)

    def __str__(self):
        if self.has_ci:
            return f"{self.point:.4g} [{self.ci_low:.4g}, {self.ci_high:.4g}]"
        return f"{self.point:.4g}"


def _div(num, den, estimator, term):
    if den == 0 or math.isnan(den):
        raise UndefinedRatioError(estimator, term)
    return num / den


def _cross_ratio(joint_a, total_a, total_b, joint_b, estimator, terms):
    """``(joint_a / total_a) * (total_b / joint_b)`` as a single division.

    One rounding step instead of three, so identical arms give exactly 1.
    """
    for value, term in ((total_a, terms[0]), (joint_b, terms[1])):
        if value == 0 or math.isnan(value):
            raise UndefinedRatioError(estimator, term)
    return (joint_a * total_b) / (total_a * joint_b)


# ---------------------------------------------------------------- supervised

def rrecall_direct(counts: ContingencyCounts) -> RatioEstimate:
    """Recall of B over recall of A from per-arm cross-acceptance of TPs.

    ``(NTP_BA_on_A / NPos_A) * (NPos_B / NTP_AB_on_B)``
    """
    value = _cross_ratio(counts.NTP_BA_on_A, counts.NPos_A, counts.NPos_B, counts.NTP_AB_on_B,
                         "rrecall_direct", ("NPos_A", "NTP_AB_on_B"))
    return RatioEstimate("rRecall", "direct", value)


def rfpr_direct(counts: ContingencyCounts) -> RatioEstimate:
    """``(NFP_BA_on_A / NNeg_A) * (NNeg_B / NFP_AB_on_B)``"""
    value = _cross_ratio(counts.NFP_BA_on_A, counts.NNeg_A, counts.NNeg_B, counts.NFP_AB_on_B,
                         "rfpr_direct", ("NNeg_A", "NFP_AB_on_B"))
    return RatioEstimate("rFPR", "direct", value)


def _pooled(counts: ContingencyCounts, name: str) -> tuple[float, float]:
    if counts.NTP_AB + counts.NFP_AB == 0:
        raise UndefinedRatioError(name, "NTP_AB + NFP_AB")
    alpha, beta = counts.alpha, counts.beta
    if beta == 0:
        raise UndefinedRatioError(name, "beta")
    return alpha, beta


def rrecall_approx(counts: ContingencyCounts) -> RatioEstimate:
    """Pooled-joint recall ratio.

    ``alpha (Nmiss_A + beta NTP_AB) / (beta (Nmiss_B + alpha NTP_AB))``
    """
    name = "rrecall_approx"
    alpha, beta = _pooled(counts, name)
    num = alpha * (counts.Nmiss_A + beta * counts.NTP_AB)
    den = beta * (counts.Nmiss_B + alpha * counts.NTP_AB)
    return RatioEstimate("rRecall", "approx", _div(num, den, name, "Nmiss_B + alpha*NTP_AB"))


def rfpr_approx(counts: ContingencyCounts) -> RatioEstimate:
    """Pooled-joint FPR ratio, using the FPs accepted by only one model.

    ``alpha (NFPexcl_B + beta NFP_AB) / (beta (NFPexcl_A + alpha NFP_AB))``
    """
    name = "rfpr_approx"
    alpha, beta = _pooled(counts, name)
    num = alpha * (counts.NFPexcl_B + beta * counts.NFP_AB)
    den = beta * (counts.NFPexcl_A + alpha * counts.NFP_AB)
    return RatioEstimate("rFPR", "approx", _div(num, den, name, "NFPexcl_A + alpha*NFP_AB"))


def rfpr_abtest(counts: ContingencyCounts, traffic: ArmTraffic) -> RatioEstimate:
    """Classic A/B-test baseline: labelled false accepts per unit of traffic.

    Needs no cross-decoding and cannot say anything about recall.
    """
    name = "rfpr_abtest"
    if traffic.streams_A <= 0:
        raise UndefinedRatioError(name, "streams_A")
    if traffic.streams_B <= 0:
        raise UndefinedRatioError(name, "streams_B")
    rate_a = counts.NNeg_A / traffic.streams_A
    rate_b = counts.NNeg_B / traffic.streams_B
    return RatioEstimate("rFPR", "ab_test", _div(rate_b, rate_a, name, "NNeg_A"))


# ---------------------------------------------------------------- semi-supervised

def _ss_ratio(joint_a, total_a, total_b, joint_b, name, what):
    return _cross_ratio(joint_a, total_a, total_b, joint_b, name,
                        (f"sum over A of {what}", f"sum over cross-accepted B of {what}"))


def ss_rrecall_from_counts(soft: ContingencyCounts) -> float:
    return _ss_ratio(soft.NTP_BA_on_A, soft.NPos_A, soft.NPos_B, soft.NTP_AB_on_B,
                     "ss_rrecall", "w*p")


def ss_rfpr_from_counts(soft: ContingencyCounts) -> float:
    return _ss_ratio(soft.NFP_BA_on_A, soft.NNeg_A, soft.NNeg_B, soft.NFP_AB_on_B,
                     "ss_rfpr", "w*(1-p)")


def ss_rrecall(dataset: Dataset, thresholds: Thresholds) -> RatioEstimate:
    """Recall ratio from soft TP probabilities instead of human labels.

    Each record contributes its probability of being a true positive, so the
    estimator reduces to :func:`rrecall_direct` when every probability is 0 or 1.
    """
    return RatioEstimate("rRecall", "semi_supervised",
                         ss_rrecall_from_counts(soft_counts(dataset, thresholds)))


def ss_rfpr(dataset: Dataset, thresholds: Thresholds) -> RatioEstimate:
    """As :func:`ss_rrecall`, weighting records by ``1 - p``."""
    return RatioEstimate("rFPR", "semi_supervised",
                         ss_rfpr_from_counts(soft_counts(dataset, thresholds)))


# ---------------------------------------------------------------- base metrics

def base_metrics(tp, fp, fn, tn) -> dict:
    """Precision, recall, FPR and FDR from a confusion matrix.

    A metric whose denominator is zero is returned as ``None``; the others
    are still computed.
    """
    def ratio(num, den):
        return num / den if den > 0 else None

    precision = ratio(tp, tp + fp)
    return {
        "precision": precision,
        "recall": ratio(tp, tp + fn),
        "fpr": ratio(fp, fp + tn),
        "fdr": None if precision is None else ratio(fp, tp + fp),
    }


# ---------------------------------------------------------------- threshold sweep

class Region(str, enum.Enum):
    both_improve = "both_improve"
    recall_only = "recall_only"
    fpr_only = "fpr_only"
    both_degrade = "both_degrade"

    @classmethod
    def classify(cls, rrecall: float, rfpr: float) -> "Region":
        recall_ok = rrecall >= 1.0
        fpr_ok = rfpr <= 1.0
        if recall_ok and fpr_ok:
            return cls.both_improve
        if recall_ok:
            return cls.recall_only
        if fpr_ok:
            return cls.fpr_only
        return cls.both_degrade


@dataclass(frozen=True)
class SweepRow:
    t_B: float
    rFPR: RatioEstimate
    rRecall: RatioEstimate

    @property
    def region(self) -> Region:
        return Region.classify(self.rRecall.point, self.rFPR.point)

    def to_dict(self) -> dict:
        return {"t_B": self.t_B, "rFPR": self.rFPR.to_dict(),
                "rRecall": self.rRecall.to_dict(), "region": self.region.value}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        return cls(d["t_B"], RatioEstimate.from_dict(d["rFPR"]), RatioEstimate.from_dict(d["rRecall"]))


_SWEEP_METHODS = {
    "direct": ("rrecall_direct", "rfpr_direct"),
    "approx": ("rrecall_approx", "rfpr_approx"),
}


def rethreshold(dataset: Dataset, t_A: float, t_B: float) -> Dataset:
    """Drop records the collecting model would have rejected at ``(t_A, t_B)``."""
    keep = np.where(dataset.is_b, dataset.collector_score > t_B, dataset.collector_score > t_A)
    return dataset.subset(keep)


def threshold_sweep(dataset: Dataset, t_A: float, t_B_grid: Sequence[float],
                    method: str = "direct", deployed_t_B: float | None = None,
                    bootstrap=None) -> list[SweepRow]:
    """Recompute both ratios over a grid of candidate thresholds for B.

    Raising ``t_B`` removes B-arm records whose collector score no longer
    clears it and tightens B's offline acceptance of A-arm records. Thresholds
    below the one B was deployed with cannot be evaluated, since that data was
    never collected.

    Parameters
    ----------
    dataset : Dataset
    t_A : float
        Fixed baseline threshold.
    t_B_grid : sequence of float
    method : {"direct", "approx"}
    deployed_t_B : float, optional
        Threshold B was deployed with. When omitted the lowest collector
        score in arm B is used as a conservative bound.
    bootstrap : BootstrapConfig, optional
        If given, every row carries percentile intervals.

    Returns
    -------
    list of SweepRow
        One row per grid point, in grid order.
    """
    if method not in _SWEEP_METHODS:
        raise ValueError(f"method must be one of {sorted(_SWEEP_METHODS)}, got {method!r}")
    b_scores = dataset.collector_score[dataset.is_b]
    if deployed_t_B is None:
        floor = float(b_scores.min()) if len(b_scores) else -math.inf
        source = "lowest B collector score"
    else:
        floor = float(deployed_t_B)
        source = "deployment threshold"
    below = [t for t in t_B_grid if t < floor]
    if below:
        raise ValueError(
            f"t_B grid points {below} are below the {source} {floor}: "
            "data under the online threshold was never collected and cannot be re-thresholded"
        )

    from .bootstrap import bootstrap_ci, estimate

    rr_name, rf_name = _SWEEP_METHODS[method]
    rows = []
    for t in t_B_grid:
        sub = rethreshold(dataset, t_A, t)
        th = Thresholds(t_A, float(t))
        if bootstrap is None:
            rr, rf = estimate(rr_name, sub, th), estimate(rf_name, sub, th)
        else:
            rr = bootstrap_ci(sub, th, rr_name, bootstrap)
            rf = bootstrap_ci(sub, th, rf_name, bootstrap)
        rows.append(SweepRow(float(t), rFPR=rf, rRecall=rr))
    return rows


def select_threshold(rows: Sequence[SweepRow], goal: str) -> SweepRow | None:
    """Pick an operating point for B from sweep rows.

    ``match_fpr``
        Among rows with rFPR <= 1, the one closest to 1, ties broken by the
        highest rRecall.
    ``match_recall``
        Among rows with rRecall >= 1, the one closest to 1, ties broken by the
        lowest rFPR.
    ``dominate``
        Among rows strictly better on both ratios, the one with highest
        rRecall.

    Returns None when no row qualifies.
    """
    if not rows:
        raise ValueError("rows must be non-empty")
    if goal == "match_fpr":
        cands = [r for r in rows if r.rFPR.point <= 1.0]
        key = lambda r: (r.rFPR.point, r.rRecall.point)  # noqa: E731
        return max(cands, key=key) if cands else None
    if goal == "match_recall":
        cands = [r for r in rows if r.rRecall.point >= 1.0]
        key = lambda r: (r.rRecall.point, r.rFPR.point)  # noqa: E731
        return min(cands, key=key) if cands else None
    if goal == "dominate":
        cands = [r for r in rows if r.rRecall.point > 1.0 and r.rFPR.point < 1.0]
        return max(cands, key=lambda r: r.rRecall.point) if cands else None
    raise ValueError(f"unknown goal {goal!r}")
