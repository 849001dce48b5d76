"""Seeded Monte Carlo generators for simultaneous two-arm deployments.

Both generators emit ordinary :class:`~abba.data.Dataset` objects with scores
placed so that thresholding at ``threshold`` (default 0.5) reproduces the
simulated accept/reject decisions.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .data import Arm, ArmTraffic, Dataset, write_records
from .exceptions import ConfigError

__all__ = [
    "AbbaSimConfig",
    "LabelMachineSpec",
    "SsSimConfig",
    "simulate_abba",
    "simulate_ss",
    "reverse_conditionals",
    "ACCURATE_MACHINE",
    "FP_OVERSCORING_MACHINE",
    "TP_UNDERSCORING_MACHINE",
    "MACHINES",
    "write_simulation",
]

_MAX_SEED = 2**64 - 1


def _check_prob(name, value, *, closed_right=False):
    ok = 0.0 < value <= 1.0 if closed_right else 0.0 < value < 1.0
    if not ok:
        interval = "(0, 1]" if closed_right else "(0, 1)"
        raise ConfigError(f"{name}={value} must lie in {interval}", name)


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= _MAX_SEED:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed")


def _from_dict(cls, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config field(s) {sorted(unknown)}", sorted(unknown)[0])
    required = {f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
    missing = required - set(d)
    if missing:
        raise ConfigError(f"missing config field(s) {sorted(missing)}", sorted(missing)[0])
    return cls(**d)


def _scores(rng, accepted, threshold):
    """Scores in ``(t, 1]`` for accepts and ``[0, t)`` for rejects."""
    u = rng.random(len(accepted))
    return np.where(accepted, threshold + (1.0 - threshold) * (1.0 - u), threshold * u)


# ---------------------------------------------------------------- AB/BA

@dataclass(frozen=True)
class AbbaSimConfig:
    """Two KWS models deployed on a random split of a keyword source.

    ``cross_tp_given_A`` / ``cross_fp_given_A`` are the probabilities that B,
    run offline, accepts A's true / false accepts. The reverse direction is
    not free: both arms share one joint acceptance law, see
    :func:`reverse_conditionals`.
    """

    p_positive: float
    recall_A: float
    fpr_A: float
    recall_B: float
    fpr_B: float
    cross_tp_given_A: float
    cross_fp_given_A: float
    n_streams: int
    seed: int
    n_labeled: int | None = None
    arm_split: float = 0.5
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("p_positive", "recall_A", "fpr_A", "recall_B", "fpr_B",
                     "arm_split", "threshold"):
            _check_prob(name, getattr(self, name))
        for name in ("cross_tp_given_A", "cross_fp_given_A"):
            _check_prob(name, getattr(self, name), closed_right=True)
        if int(self.n_streams) != self.n_streams or self.n_streams < 2:
            raise ConfigError(f"n_streams must be an integer >= 2, got {self.n_streams}", "n_streams")
        if self.n_labeled is not None and (int(self.n_labeled) != self.n_labeled or self.n_labeled < 0):
            raise ConfigError(f"n_labeled must be a non-negative integer, got {self.n_labeled}", "n_labeled")
        _check_seed(self.seed)
        reverse_conditionals(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AbbaSimConfig":
        return _from_dict(cls, d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def ground_truth(self) -> dict:
        return {"rRecall": self.recall_B / self.recall_A, "rFPR": self.fpr_B / self.fpr_A}


def reverse_conditionals(config: AbbaSimConfig) -> tuple[float, float]:
    """Probabilities that A accepts B's true / false accepts offline.

    With one joint law ``P(A=1, B=1 | L)`` for both populations,
    ``P(A=1 | B=1, L=1) = recall_A * P(B=1 | A=1, L=1) / recall_B`` and
    likewise for false accepts with the FPRs.
    """
    tp = config.recall_A * config.cross_tp_given_A / config.recall_B
    fp = config.fpr_A * config.cross_fp_given_A / config.fpr_B
    for name, value, pair in (("P(A=1|B=1,L=1)", tp, "recall_A*cross_tp_given_A/recall_B"),
                              ("P(A=1|B=1,L=0)", fp, "fpr_A*cross_fp_given_A/fpr_B")):
        if not 0.0 < value <= 1.0 + 1e-12:
            field_name = "cross_tp_given_A" if "L=1" in name else "cross_fp_given_A"
            raise ConfigError(
                f"inconsistent config: derived {name} = {pair} = {value:.6g} is outside (0, 1]",
                field_name)
    return min(tp, 1.0), min(fp, 1.0)


def _simulate_arm(rng, n, p, recall, fpr, cross_tp, cross_fp):
    positive = rng.random(n) < p
    accepted = rng.random(n) < np.where(positive, recall, fpr)
    label = positive[accepted]
    cross = rng.random(label.size) < np.where(label, cross_tp, cross_fp)
    return label, cross


def simulate_abba(config: AbbaSimConfig):
    """Simulate online collection plus offline cross-decoding.

    Returns
    -------
    dataset : Dataset
        One record per accept of the collecting model, A-arm records first.
        ``config.n_labeled`` records (all when None), picked uniformly over
        the accepts of both arms, carry their true label.
    traffic : ArmTraffic
    ground_truth : dict
        ``{"rRecall": recall_B / recall_A, "rFPR": fpr_B / fpr_A}``
    """
    rev_tp, rev_fp = reverse_conditionals(config)
    rng = np.random.default_rng(np.random.SeedSequence(int(config.seed)))
    n_a = int(round(config.n_streams * config.arm_split))
    n_b = int(config.n_streams) - n_a
    lab_a, cross_a = _simulate_arm(rng, n_a, config.p_positive, config.recall_A, config.fpr_A,
                                   config.cross_tp_given_A, config.cross_fp_given_A)
    lab_b, cross_b = _simulate_arm(rng, n_b, config.p_positive, config.recall_B, config.fpr_B,
                                   rev_tp, rev_fp)
    truth = np.concatenate([lab_a, lab_b]).astype(np.int8)
    cross = np.concatenate([cross_a, cross_b])
    n = truth.size
    is_b = np.arange(n) >= lab_a.size

    if config.n_labeled is None:
        hard = truth
    else:
        if config.n_labeled > n:
            raise ConfigError(
                f"n_labeled={config.n_labeled} exceeds the {n} simulated accepts", "n_labeled")
        hard = np.full(n, -1, dtype=np.int8)
        chosen = rng.choice(n, size=int(config.n_labeled), replace=False)
        hard[chosen] = truth[chosen]

    t = config.threshold
    ids = np.array([f"A{i:08d}" for i in range(lab_a.size)]
                   + [f"B{i:08d}" for i in range(lab_b.size)], dtype=object)
    dataset = Dataset.from_arrays(
        ids=ids, arm=is_b,
        collector_score=_scores(rng, np.ones(n, bool), t),
        cross_score=_scores(rng, cross, t),
        hard_label=hard,
    )
    return dataset, ArmTraffic(n_a, n_b), config.ground_truth


# ---------------------------------------------------------------- semi-supervised

@dataclass(frozen=True)
class LabelMachineSpec:
    """Beta distribution of the machine's TP probability per (arm, true label)."""

    a0: tuple[float, float]
    a1: tuple[float, float]
    b0: tuple[float, float]
    b1: tuple[float, float]

    def __post_init__(self):
        for name in ("a0", "a1", "b0", "b1"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ConfigError(f"Beta parameters for {name} must be positive, got {(a, b)}", name)
            object.__setattr__(self, name, (float(a), float(b)))

    def params(self, arm: Arm, label: int) -> tuple[float, float]:
        return getattr(self, f"{Arm(arm).value.lower()}{int(label)}")

    def mean(self, arm: Arm, label: int) -> float:
        a, b = self.params(arm, label)
        return a / (a + b)

    @classmethod
    def symmetric(cls, l0, l1) -> "LabelMachineSpec":
        return cls(a0=l0, a1=l1, b0=l0, b1=l1)

    def to_dict(self) -> dict:
        return {arm: {str(lab): list(self.params(arm, lab)) for lab in (0, 1)} for arm in ("A", "B")}

    @classmethod
    def from_dict(cls, d) -> "LabelMachineSpec":
        if isinstance(d, str):
            try:
                return MACHINES[d]
            except KeyError:
                raise ConfigError(f"unknown machine preset {d!r}; choose from {sorted(MACHINES)}",
                                  "machine") from None
        try:
            return cls(a0=tuple(d["A"]["0"]), a1=tuple(d["A"]["1"]),
                       b0=tuple(d["B"]["0"]), b1=tuple(d["B"]["1"]))
        except (KeyError, TypeError):
            raise ConfigError("machine must be a preset name or {A: {0: [a, b], 1: [a, b]}, B: ...}",
                              "machine") from None


# Well calibrated on both arms: mean TP probability 0.2% for FPs, 98.4% for TPs.
ACCURATE_MACHINE = LabelMachineSpec.symmetric((2, 1000), (300, 5))
# Gives arm A's false accepts a mean TP probability of 4.8%.
FP_OVERSCORING_MACHINE = LabelMachineSpec(a0=(5, 100), a1=(300, 5), b0=(2, 1000), b1=(300, 5))
# Gives arm A's true accepts a mean TP probability of 90.9%.
TP_UNDERSCORING_MACHINE = LabelMachineSpec(a0=(2, 1000), a1=(100, 10), b0=(2, 1000), b1=(300, 5))

MACHINES = {
    "accurate": ACCURATE_MACHINE,
    "fp_overscoring": FP_OVERSCORING_MACHINE,
    "tp_underscoring": TP_UNDERSCORING_MACHINE,
}


@dataclass(frozen=True)
class SsSimConfig:
    """Fixed-size arms with soft labels drawn from a label machine.

    ``tp_fraction_X`` is the fraction of arm X's collected records that are
    true positives. ``cross_tp_A`` is P(B accepts | collected by A, TP),
    ``cross_fp_B`` is P(A accepts | collected by B, FP), and so on.
    """

    tp_fraction_A: float
    tp_fraction_B: float
    cross_tp_A: float
    cross_fp_A: float
    cross_tp_B: float
    cross_fp_B: float
    n_per_arm: int
    seed: int
    machine: LabelMachineSpec = field(default=ACCURATE_MACHINE)
    threshold: float = 0.5

    def __post_init__(self):
        if not isinstance(self.machine, LabelMachineSpec):
            object.__setattr__(self, "machine", LabelMachineSpec.from_dict(self.machine))
        for name in ("tp_fraction_A", "tp_fraction_B", "threshold"):
            _check_prob(name, getattr(self, name))
        for name in ("cross_tp_A", "cross_fp_A", "cross_tp_B", "cross_fp_B"):
            _check_prob(name, getattr(self, name), closed_right=True)
        if int(self.n_per_arm) != self.n_per_arm or self.n_per_arm < 1:
            raise ConfigError(f"n_per_arm must be a positive integer, got {self.n_per_arm}", "n_per_arm")
        _check_seed(self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> "SsSimConfig":
        return _from_dict(cls, d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["machine"] = self.machine.to_dict()
        return d

    @property
    def expected(self) -> dict:
        """Population ratios implied by the cross-acceptance probabilities."""
        return {"rRecall": self.cross_tp_A / self.cross_tp_B, "rFPR": self.cross_fp_A / self.cross_fp_B}


def simulate_ss(config: SsSimConfig) -> Dataset:
    """Simulate collected records with true labels and machine soft labels.

    True labels are kept as ``hard_label`` so the supervised estimators can
    serve as a reference on the same data.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(config.seed)))
    n = int(config.n_per_arm)
    parts = []
    for arm, tp_frac, c_tp, c_fp in ((Arm.A, config.tp_fraction_A, config.cross_tp_A, config.cross_fp_A),
                                     (Arm.B, config.tp_fraction_B, config.cross_tp_B, config.cross_fp_B)):
        label = rng.random(n) < tp_frac
        cross = rng.random(n) < np.where(label, c_tp, c_fp)
        soft = np.empty(n)
        for lab in (0, 1):
            sel = label == bool(lab)
            a, b = config.machine.params(arm, lab)
            soft[sel] = rng.beta(a, b, size=int(sel.sum()))
        parts.append((arm, label, cross, soft))

    t = config.threshold
    label = np.concatenate([p[1] for p in parts])
    cross = np.concatenate([p[2] for p in parts])
    soft = np.concatenate([p[3] for p in parts])
    ids = np.array([f"{arm.value}{i:08d}" for arm, *_ in parts for i in range(n)], dtype=object)
    return Dataset.from_arrays(
        ids=ids, arm=np.repeat([False, True], n),
        collector_score=_scores(rng, np.ones(2 * n, bool), t),
        cross_score=_scores(rng, cross, t),
        hard_label=label.astype(np.int8),
        soft_tp_prob=soft,
    )


def write_simulation(dataset: Dataset, path: str | os.PathLike, sidecar: dict) -> str:
    """Write records to ``path`` and ``sidecar`` to ``<path>.meta.json``."""
    write_records(dataset, path)
    meta_path = f"{os.fspath(path)}.meta.json"
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path
