import numpy as np
import pytest

from abba import Dataset, Thresholds, UtteranceRecord


def make_dataset(rows, **defaults):
    """rows: iterable of (arm, hard_label, cross_score[, soft]) tuples."""
    recs = []
    for i, row in enumerate(rows):
        arm, label, cross = row[:3]
        soft = row[3] if len(row) > 3 else None
        recs.append(UtteranceRecord(
            id=f"{arm}{i}", arm=arm, collector_score=defaults.get("collector_score", 0.9),
            cross_score=cross, hard_label=label, soft_tp_prob=soft,
            sampling_weight=defaults.get("sampling_weight", 1.0),
        ))
    return Dataset(recs)


SEVEN = [
    ("A", 1, 0.9), ("A", 1, 0.2), ("A", 0, 0.9), ("A", 0, 0.2),
    ("B", 1, 0.9), ("B", 1, 0.2), ("B", 0, 0.9),
]


@pytest.fixture
def seven():
    return make_dataset(SEVEN)


@pytest.fixture
def half():
    return Thresholds(0.5, 0.5)


def random_small_dataset(rng, n_max=12, soft_binary=True):
    """Random dataset where every arm has both labels and cross-accepted TPs/FPs."""
    while True:
        n_a, n_b = rng.integers(4, n_max + 1, size=2)
        n = n_a + n_b
        labels = rng.integers(0, 2, n)
        cross = rng.random(n)
        is_b = np.arange(n) >= n_a
        ok = True
        for arm in (~is_b, is_b):
            for lab in (0, 1):
                sel = arm & (labels == lab)
                if not (sel.any() and (cross[sel] > 0.5).any()):
                    ok = False
        if ok:
            break
    weights = rng.integers(1, 4, n).astype(float)
    return Dataset.from_arrays(
        ids=[f"r{i}" for i in range(n)], arm=is_b,
        collector_score=np.full(n, 0.9), cross_score=cross,
        hard_label=labels, soft_tp_prob=labels.astype(float) if soft_binary else None,
        sampling_weight=weights,
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
