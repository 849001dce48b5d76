"""Cubic score-to-probability calibration for label-machine scores."""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .data import Dataset

__all__ = ["CalibrationModel", "NonMonotoneCalibrationWarning", "fit", "apply", "annotate_soft"]

DEGREE = 3
MIN_PAIRS = 8
_GRID = 1000


class NonMonotoneCalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CalibrationModel:
    """Cubic ``c0 + c1 m + c2 m^2 + c3 m^3``, clamped to ``[0, 1]``.

    Scores outside ``score_domain`` are clamped to it before evaluation.
    """

    coefficients: tuple[float, float, float, float]
    score_domain: tuple[float, float]
    monotone_on_domain: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "score_domain", tuple(float(v) for v in self.score_domain))
        if len(self.coefficients) != DEGREE + 1:
            raise ValueError(f"expected {DEGREE + 1} coefficients, got {len(self.coefficients)}")
        lo, hi = self.score_domain
        if not lo < hi:
            raise ValueError(f"score_domain must satisfy min < max, got {self.score_domain}")

    def __call__(self, machine_score):
        return apply(self, machine_score)

    def to_json(self) -> str:
        return json.dumps({
            "coefficients": list(self.coefficients),
            "score_domain": list(self.score_domain),
            "monotone": self.monotone_on_domain,
        })

    @classmethod
    def from_json(cls, text: str) -> "CalibrationModel":
        d = json.loads(text)
        return cls(tuple(d["coefficients"]), tuple(d["score_domain"]), bool(d["monotone"]))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CalibrationModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _is_monotone(coef, domain) -> bool:
    grid = np.linspace(domain[0], domain[1], _GRID)
    slope = P.polyval(grid, P.polyder(coef))
    # tolerate round-off on a flat polynomial
    return bool((slope >= -1e-12 * max(1.0, np.abs(coef).max())).all())


def fit(pairs: Sequence[tuple[float, int]], weights: Sequence[float] | None = None) -> CalibrationModel:
    """Least-squares cubic of hard label on machine score.

    With fewer than four distinct scores the degree drops to one less than
    the number of distinct scores; higher coefficients are zero.

    Parameters
    ----------
    pairs : sequence of (machine_score, hard_label)
        At least eight pairs with both labels present.
    weights : sequence of float, optional
        Per-pair weights on the squared residuals.

    Returns
    -------
    CalibrationModel
        A :class:`NonMonotoneCalibrationWarning` is issued when the fitted
        cubic decreases anywhere on the observed score range.
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(arr) < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} pairs, got {len(arr)}")
    m, y = arr[:, 0], arr[:, 1]
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError(f"single-class input: every label is {int(y[0])}")
    lo, hi = float(m.min()), float(m.max())
    if lo == hi:
        raise ValueError("degenerate input: all machine scores are equal")

    # sort so the fit does not depend on input order
    order = np.lexsort((y, m))
    m, y = m[order], y[order]
    w = None
    if weights is not None:
        w = np.asarray(weights, dtype=float)[order]
        if len(w) != len(m) or (w < 0).any():
            raise ValueError("weights must be non-negative and match pairs")
        w = np.sqrt(w)

    # fit on a centred/scaled score for conditioning, then map back;
    # fewer than four distinct scores cannot pin down a cubic
    deg = min(DEGREE, len(np.unique(m)) - 1)
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    coef_u = P.polyfit((m - center) / half, y, deg, w=w)
    coef = _unscale(coef_u, center, half)
    monotone = _is_monotone(coef, (lo, hi))
    if not monotone:
        warnings.warn("fitted calibration cubic is not monotone on the score range",
                      NonMonotoneCalibrationWarning, stacklevel=2)
    return CalibrationModel(tuple(coef), (lo, hi), monotone)


def _unscale(coef_u, center, half):
    # p(u) with u = (m - center)/half  ->  coefficients in m
    shift = np.array([-center / half, 1.0 / half])
    out = np.zeros(1)
    power = np.ones(1)
    for c in coef_u:
        out = P.polyadd(out, c * power)
        power = P.polymul(power, shift)
    return np.pad(out, (0, DEGREE + 1 - len(out)))[: DEGREE + 1]


def apply(model: CalibrationModel, machine_score):
    """Map machine score(s) to a TP probability in ``[0, 1]``."""
    lo, hi = model.score_domain
    m = np.clip(np.asarray(machine_score, dtype=float), lo, hi)
    p = np.clip(P.polyval(m, np.asarray(model.coefficients)), 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def annotate_soft(dataset: Dataset, model: CalibrationModel,
                  machine_scores: Mapping[str, float], ids=None) -> Dataset:
    """Fill ``soft_tp_prob`` from calibrated machine scores.

    Parameters
    ----------
    dataset : Dataset
    model : CalibrationModel
    machine_scores : mapping of record id to machine score
    ids : iterable of str, optional
        Records to annotate; all records by default. Other records keep
        their current soft label. Hard labels are never touched.
    """
    all_ids = [str(i) for i in dataset.ids]
    wanted = set(all_ids) if ids is None else set(ids)
    unknown = wanted.difference(all_ids)
    if unknown:
        raise KeyError(f"ids not in dataset: {sorted(unknown)[:20]}")
    missing = sorted(i for i in wanted if i not in machine_scores)
    if missing:
        raise KeyError(f"no machine score for {len(missing)} id(s): {missing[:20]}")
    soft = dataset.soft_tp_prob.copy()
    for k, rid in enumerate(all_ids):
        if rid in wanted:
            soft[k] = apply(model, machine_scores[rid])
    return dataset.with_soft_labels(soft)
