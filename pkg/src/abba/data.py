"""Record model, line-delimited ingestion and weighted contingency counts.

A dataset holds every utterance collected online by either arm. Each record
carries the collecting model's score and the score the *other* model produced
when decoding the same audio offline. Counting is a weighted fold over records:
an A-arm record is cross-accepted when ``cross_score > t_B`` and a B-arm record
when ``cross_score > t_A``.
"""
from __future__ import annotations

import enum
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .exceptions import RecordFormatError, RecordValueError

logger = logging.getLogger(__name__)

__all__ = [
    "Arm",
    "UtteranceRecord",
    "Thresholds",
    "ArmTraffic",
    "ContingencyCounts",
    "Dataset",
    "ingest",
    "write_records",
    "build_counts",
    "soft_counts",
]


class Arm(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Arm":
        return Arm.B if self is Arm.A else Arm.A


@dataclass(frozen=True)
class UtteranceRecord:
    """One utterance collected online by the model deployed on ``arm``."""

    id: str
    arm: Arm
    collector_score: float
    cross_score: float
    hard_label: int | None = None
    soft_tp_prob: float | None = None
    stratum: str = "default"
    sampling_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "arm", Arm(self.arm))
        if self.hard_label is not None and self.hard_label not in (0, 1):
            raise RecordValueError(f"hard_label must be 0, 1 or null, got {self.hard_label!r}", self.id)
        if self.soft_tp_prob is not None and not 0.0 <= self.soft_tp_prob <= 1.0:
            raise RecordValueError(f"soft_tp_prob {self.soft_tp_prob} outside [0, 1]", self.id)
        if not self.sampling_weight >= 0.0:
            raise RecordValueError(f"sampling_weight {self.sampling_weight} is negative", self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "arm": self.arm.value,
            "collector_score": self.collector_score,
            "cross_score": self.cross_score,
            "hard_label": self.hard_label,
            "soft_tp_prob": self.soft_tp_prob,
            "stratum": self.stratum,
            "sampling_weight": self.sampling_weight,
        }


@dataclass(frozen=True)
class Thresholds:
    t_A: float
    t_B: float

    def __post_init__(self):
        if not (math.isfinite(self.t_A) and math.isfinite(self.t_B)):
            raise ValueError("thresholds must be finite")

    def for_arm(self, arm: Arm) -> float:
        return self.t_A if Arm(arm) is Arm.A else self.t_B


@dataclass(frozen=True)
class ArmTraffic:
    """Total online opportunities (accepted or not) seen by each arm."""

    streams_A: int
    streams_B: int

    def to_dict(self) -> dict:
        return {"streams_A": self.streams_A, "streams_B": self.streams_B}

    @classmethod
    def from_dict(cls, d: dict) -> "ArmTraffic":
        return cls(int(d["streams_A"]), int(d["streams_B"]))

    def check(self, dataset: "Dataset") -> None:
        n_a, n_b = dataset.arm_sizes()
        if self.streams_A < n_a or self.streams_B < n_b:
            raise ValueError(
                f"traffic ({self.streams_A}, {self.streams_B}) smaller than "
                f"collected records ({n_a}, {n_b})"
            )


_REL_TOL = 1e-9


@dataclass(frozen=True)
class ContingencyCounts:
    """Weighted label/cross-acceptance counts for both arms.

    ``*_BA_on_A`` counts are A-arm records also accepted by B offline and
    ``*_AB_on_B`` counts are B-arm records also accepted by A offline.
    """

    NPos_A: float
    NNeg_A: float
    NPos_B: float
    NNeg_B: float
    NTP_BA_on_A: float
    NFP_BA_on_A: float
    NTP_AB_on_B: float
    NFP_AB_on_B: float
    n_excluded: int = field(default=0, compare=False)

    def __post_init__(self):
        for name in ("NPos_A", "NNeg_A", "NPos_B", "NNeg_B",
                     "NTP_BA_on_A", "NFP_BA_on_A", "NTP_AB_on_B", "NFP_AB_on_B"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for joint, total in (("NTP_BA_on_A", "NPos_A"), ("NFP_BA_on_A", "NNeg_A"),
                             ("NTP_AB_on_B", "NPos_B"), ("NFP_AB_on_B", "NNeg_B")):
            j, t = getattr(self, joint), getattr(self, total)
            if j > t * (1 + _REL_TOL) + 1e-300:
                raise ValueError(f"{joint}={j} exceeds {total}={t}")

    # exclusive counts
    @property
    def Nmiss_B(self) -> float:
        """TPs collected by A that B rejects."""
        return max(self.NPos_A - self.NTP_BA_on_A, 0.0)

    @property
    def Nmiss_A(self) -> float:
        """TPs collected by B that A rejects."""
        return max(self.NPos_B - self.NTP_AB_on_B, 0.0)

    @property
    def NFPexcl_A(self) -> float:
        return max(self.NNeg_A - self.NFP_BA_on_A, 0.0)

    @property
    def NFPexcl_B(self) -> float:
        return max(self.NNeg_B - self.NFP_AB_on_B, 0.0)

    # pooled joint counts
    @property
    def NTP_AB(self) -> float:
        return self.NTP_BA_on_A + self.NTP_AB_on_B

    @property
    def NFP_AB(self) -> float:
        return self.NFP_BA_on_A + self.NFP_AB_on_B

    @property
    def alpha(self) -> float:
        """Share of jointly accepted records that came from arm A (nan if none)."""
        total = self.NTP_AB + self.NFP_AB
        return (self.NTP_BA_on_A + self.NFP_BA_on_A) / total if total > 0 else math.nan

    @property
    def beta(self) -> float:
        total = self.NTP_AB + self.NFP_AB
        return (self.NTP_AB_on_B + self.NFP_AB_on_B) / total if total > 0 else math.nan

    def swapped(self) -> "ContingencyCounts":
        """Counts with the roles of A and B exchanged."""
        return ContingencyCounts(
            NPos_A=self.NPos_B, NNeg_A=self.NNeg_B, NPos_B=self.NPos_A, NNeg_B=self.NNeg_A,
            NTP_BA_on_A=self.NTP_AB_on_B, NFP_BA_on_A=self.NFP_AB_on_B,
            NTP_AB_on_B=self.NTP_BA_on_A, NFP_AB_on_B=self.NFP_BA_on_A,
            n_excluded=self.n_excluded,
        )

    def scaled(self, c: float) -> "ContingencyCounts":
        return ContingencyCounts(
            **{k: getattr(self, k) * c for k in (
                "NPos_A", "NNeg_A", "NPos_B", "NNeg_B",
                "NTP_BA_on_A", "NFP_BA_on_A", "NTP_AB_on_B", "NFP_AB_on_B")},
            n_excluded=self.n_excluded,
        )

    @classmethod
    def from_arm_sums(cls, sums_a, sums_b, n_excluded: int = 0) -> "ContingencyCounts":
        """Build from per-arm ``(pos, neg, pos_cross, neg_cross)`` sums."""
        pa, na, pxa, nxa = (float(v) for v in sums_a)
        pb, nb, pxb, nxb = (float(v) for v in sums_b)
        # guard summation round-off so invariants hold exactly
        return cls(pa, na, pb, nb, min(pxa, pa), min(nxa, na), min(pxb, pb), min(nxb, nb),
                   n_excluded=n_excluded)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "NPos_A", "NNeg_A", "NPos_B", "NNeg_B",
            "NTP_BA_on_A", "NFP_BA_on_A", "NTP_AB_on_B", "NFP_AB_on_B")}
        d.update(Nmiss_A=self.Nmiss_A, Nmiss_B=self.Nmiss_B,
                 NFPexcl_A=self.NFPexcl_A, NFPexcl_B=self.NFPexcl_B,
                 n_excluded=self.n_excluded)
        return d


class Dataset:
    """Column store of utterance records.

    Columns are numpy arrays; a missing ``hard_label`` is stored as -1 and a
    missing ``soft_tp_prob`` as nan. Datasets are treated as immutable: every
    transformation returns a new instance.
    """

    _COLUMNS = ("ids", "is_b", "collector_score", "cross_score",
                "hard_label", "soft_tp_prob", "stratum", "sampling_weight")

    def __init__(self, records: Iterable[UtteranceRecord] = ()):
        records = list(records)
        self._set_columns(
            ids=np.array([r.id for r in records], dtype=object),
            is_b=np.array([r.arm is Arm.B for r in records], dtype=bool),
            collector_score=np.array([r.collector_score for r in records], dtype=float),
            cross_score=np.array([r.cross_score for r in records], dtype=float),
            hard_label=np.array([-1 if r.hard_label is None else r.hard_label for r in records],
                                dtype=np.int8),
            soft_tp_prob=np.array([np.nan if r.soft_tp_prob is None else r.soft_tp_prob
                                   for r in records], dtype=float),
            stratum=np.array([r.stratum for r in records], dtype=object),
            sampling_weight=np.array([r.sampling_weight for r in records], dtype=float),
        )
        self._check_unique()

    @classmethod
    def from_arrays(cls, ids, arm, collector_score, cross_score, hard_label=None,
                    soft_tp_prob=None, stratum=None, sampling_weight=None) -> "Dataset":
        """Fast constructor from columns.

        ``arm`` may be a boolean "is B" array or an array of ``"A"``/``"B"``.
        ``hard_label`` uses -1 for missing, ``soft_tp_prob`` uses nan.
        """
        n = len(ids)
        arm = np.asarray(arm)
        is_b = arm.astype(bool) if arm.dtype == bool else (arm == "B")
        ds = cls.__new__(cls)
        ds._set_columns(
            ids=np.asarray(ids, dtype=object),
            is_b=np.asarray(is_b, dtype=bool),
            collector_score=np.asarray(collector_score, dtype=float),
            cross_score=np.asarray(cross_score, dtype=float),
            hard_label=(np.full(n, -1, np.int8) if hard_label is None
                        else np.asarray(hard_label, dtype=np.int8)),
            soft_tp_prob=(np.full(n, np.nan) if soft_tp_prob is None
                          else np.asarray(soft_tp_prob, dtype=float)),
            stratum=(np.full(n, "default", dtype=object) if stratum is None
                     else np.asarray(stratum, dtype=object)),
            sampling_weight=(np.ones(n) if sampling_weight is None
                             else np.asarray(sampling_weight, dtype=float)),
        )
        ds._validate()
        ds._check_unique()
        return ds

    def _set_columns(self, **cols):
        n = len(cols["ids"])
        for name in self._COLUMNS:
            col = cols[name]
            if len(col) != n:
                raise ValueError(f"column {name} has length {len(col)}, expected {n}")
            col.flags.writeable = False
            setattr(self, name, col)

    def _validate(self):
        lab = self.hard_label
        bad = ~np.isin(lab, (-1, 0, 1))
        if bad.any():
            raise RecordValueError("hard_label must be 0, 1 or null", self.ids[np.argmax(bad)])
        p = self.soft_tp_prob
        bad = ~np.isnan(p) & ((p < 0) | (p > 1))
        if bad.any():
            i = int(np.argmax(bad))
            raise RecordValueError(f"soft_tp_prob {p[i]} outside [0, 1]", self.ids[i])
        bad = ~(self.sampling_weight >= 0)
        if bad.any():
            i = int(np.argmax(bad))
            raise RecordValueError(f"sampling_weight {self.sampling_weight[i]} is negative", self.ids[i])

    def _check_unique(self):
        if len(self.ids) == 0:
            return
        uniq, counts = np.unique(self.ids.astype(str), return_counts=True)
        if (counts > 1).any():
            raise RecordValueError("duplicate id", str(uniq[np.argmax(counts > 1)]))

    def _replace(self, **cols) -> "Dataset":
        merged = {name: getattr(self, name) for name in self._COLUMNS}
        merged.update(cols)
        ds = Dataset.__new__(Dataset)
        ds._set_columns(**{k: np.array(v) for k, v in merged.items()})
        ds._validate()
        return ds

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def __repr__(self):
        n_a, n_b = self.arm_sizes()
        return f"Dataset(n_A={n_a}, n_B={n_b})"

    def record(self, i: int) -> UtteranceRecord:
        lab = int(self.hard_label[i])
        p = float(self.soft_tp_prob[i])
        return UtteranceRecord(
            id=str(self.ids[i]),
            arm=Arm.B if self.is_b[i] else Arm.A,
            collector_score=float(self.collector_score[i]),
            cross_score=float(self.cross_score[i]),
            hard_label=None if lab < 0 else lab,
            soft_tp_prob=None if math.isnan(p) else p,
            stratum=str(self.stratum[i]),
            sampling_weight=float(self.sampling_weight[i]),
        )

    def arm_sizes(self) -> tuple[int, int]:
        n_b = int(self.is_b.sum())
        return len(self) - n_b, n_b

    def arm_mask(self, arm: Arm) -> np.ndarray:
        return self.is_b if Arm(arm) is Arm.B else ~self.is_b

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return self._replace(**{name: getattr(self, name)[mask] for name in self._COLUMNS})

    def cross_accepted(self, thresholds: Thresholds) -> np.ndarray:
        """Boolean mask of records also accepted by the non-collecting model."""
        t_other = np.where(self.is_b, thresholds.t_A, thresholds.t_B)
        return self.cross_score > t_other

    def with_soft_labels(self, soft_tp_prob) -> "Dataset":
        return self._replace(soft_tp_prob=np.asarray(soft_tp_prob, dtype=float))

    def with_hard_labels(self, hard_label) -> "Dataset":
        return self._replace(hard_label=np.asarray(hard_label, dtype=np.int8))

    def with_weights(self, sampling_weight) -> "Dataset":
        return self._replace(sampling_weight=np.asarray(sampling_weight, dtype=float))

    def with_strata(self, stratum) -> "Dataset":
        return self._replace(stratum=np.asarray(stratum, dtype=object))

    def swap_arms(self) -> "Dataset":
        return self._replace(is_b=~self.is_b)


# ---------------------------------------------------------------- file format

_FIELDS = {"id", "arm", "collector_score", "cross_score", "hard_label",
           "soft_tp_prob", "stratum", "sampling_weight"}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _parse_line(obj, lineno: int) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise RecordFormatError("expected a JSON object", lineno)
    unknown = set(obj) - _FIELDS
    if unknown:
        raise RecordFormatError(f"unknown field(s) {sorted(unknown)}", lineno)
    for name in ("id", "arm", "collector_score", "cross_score"):
        if name not in obj:
            raise RecordFormatError(f"missing field {name!r}", lineno)
    if not isinstance(obj["id"], str):
        raise RecordFormatError("id must be a string", lineno)
    if obj["arm"] not in ("A", "B"):
        raise RecordFormatError(f"arm must be 'A' or 'B', got {obj['arm']!r}", lineno)
    for name in ("collector_score", "cross_score"):
        if not _is_number(obj[name]):
            raise RecordFormatError(f"{name} must be a number", lineno)
    label = obj.get("hard_label")
    if label is not None and (isinstance(label, bool) or label not in (0, 1)):
        raise RecordFormatError(f"hard_label must be 0, 1 or null, got {label!r}", lineno)
    soft = obj.get("soft_tp_prob")
    if soft is not None and not _is_number(soft):
        raise RecordFormatError("soft_tp_prob must be a number or null", lineno)
    stratum = obj.get("stratum", "default")
    if not isinstance(stratum, str):
        raise RecordFormatError("stratum must be a string", lineno)
    weight = obj.get("sampling_weight", 1)
    if not _is_number(weight):
        raise RecordFormatError("sampling_weight must be a number", lineno)
    return UtteranceRecord(
        id=obj["id"], arm=Arm(obj["arm"]),
        collector_score=float(obj["collector_score"]), cross_score=float(obj["cross_score"]),
        hard_label=None if label is None else int(label),
        soft_tp_prob=None if soft is None else float(soft),
        stratum=stratum, sampling_weight=float(weight),
    )


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="\n") as fh:
            yield from fh
    else:
        yield from source


def ingest(source) -> Dataset:
    """Read a line-delimited JSON record file.

    Parameters
    ----------
    source : path, open text file or iterable of lines
        One JSON object per line. Blank lines are skipped.

    Returns
    -------
    Dataset

    Raises
    ------
    RecordFormatError
        Malformed line; the message carries the 1-based line number.
    RecordValueError
        Duplicate id, or a value outside its allowed range.
    """
    records = []
    seen = set()
    for lineno, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"invalid JSON ({exc.msg})", lineno) from None
        rec = _parse_line(obj, lineno)
        if rec.id in seen:
            raise RecordValueError(f"duplicate id on line {lineno}", rec.id)
        seen.add(rec.id)
        records.append(rec)
    ds = Dataset(records)
    n_a, n_b = ds.arm_sizes()
    logger.info("ingested %d records (A: %d, B: %d)", len(ds), n_a, n_b)
    return ds


def write_records(dataset: Dataset, target) -> None:
    """Write ``dataset`` in the line-delimited record format."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            write_records(dataset, fh)
        return
    for rec in dataset:
        target.write(json.dumps(rec.to_dict()) + "\n")


def dumps_records(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_records(dataset, buf)
    return buf.getvalue()


# ---------------------------------------------------------------- counting

def _fsum(values) -> float:
    # exactly rounded, hence independent of record order
    return math.fsum(values.tolist())


def _arm_sums(pos_w, neg_w, cross, arm_mask):
    return (
        _fsum(pos_w[arm_mask]),
        _fsum(neg_w[arm_mask]),
        _fsum(pos_w[arm_mask & cross]),
        _fsum(neg_w[arm_mask & cross]),
    )


def build_counts(dataset: Dataset, thresholds: Thresholds) -> ContingencyCounts:
    """Aggregate hard-labelled records into weighted contingency counts.

    Records without a hard label are skipped; their number is reported in
    ``n_excluded``. Acceptance is strict: a score equal to the threshold is a
    reject.
    """
    labelled = dataset.hard_label >= 0
    w = np.where(labelled, dataset.sampling_weight, 0.0)
    pos_w = np.where(dataset.hard_label == 1, w, 0.0)
    neg_w = np.where(dataset.hard_label == 0, w, 0.0)
    cross = dataset.cross_accepted(thresholds)
    return ContingencyCounts.from_arm_sums(
        _arm_sums(pos_w, neg_w, cross, ~dataset.is_b),
        _arm_sums(pos_w, neg_w, cross, dataset.is_b),
        n_excluded=int((~labelled).sum()),
    )


def soft_counts(dataset: Dataset, thresholds: Thresholds) -> ContingencyCounts:
    """Expected counts under soft labels: each record adds ``w*p`` positives
    and ``w*(1-p)`` negatives.

    Raises
    ------
    MissingSoftLabelError
        If any record lacks ``soft_tp_prob``.
    """
    from .exceptions import MissingSoftLabelError

    missing = np.isnan(dataset.soft_tp_prob)
    if missing.any():
        raise MissingSoftLabelError([str(i) for i in dataset.ids[missing]])
    w = dataset.sampling_weight
    p = dataset.soft_tp_prob
    cross = dataset.cross_accepted(thresholds)
    return ContingencyCounts.from_arm_sums(
        _arm_sums(w * p, w * (1.0 - p), cross, ~dataset.is_b),
        _arm_sums(w * p, w * (1.0 - p), cross, dataset.is_b),
    )
