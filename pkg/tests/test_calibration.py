import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abba import CalibrationModel, annotate_soft
from abba import calibration as cal
from abba.calibration import NonMonotoneCalibrationWarning

from conftest import SEVEN, make_dataset

# a cubic fit of a sigmoid wiggles at the tails; that diagnostic is tested separately
pytestmark = pytest.mark.filterwarnings("ignore::abba.calibration.NonMonotoneCalibrationWarning")


def _sigmoid_pairs(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0, 50, n)
    p = 1 / (1 + np.exp(-(m - 25) / 5))
    y = (rng.random(n) < p).astype(int)
    return np.column_stack([m, y]), p, m


def test_zero_model_gives_zero():
    model = CalibrationModel((0, 0, 0, 0), (0, 1))
    assert cal.apply(model, [0.0, 0.3, 1.0]).tolist() == [0.0, 0.0, 0.0]


def test_output_clamped_to_unit_interval():
    model = CalibrationModel((-0.5, 3.0, 0, 0), (0, 1))
    out = cal.apply(model, np.linspace(0, 1, 11))
    assert out.min() == 0.0 and out.max() == 1.0
    assert cal.apply(model, 0.5) == 1.0


def test_domain_clamp():
    model = CalibrationModel((0, 1, 0, 0), (0.2, 0.6))
    assert cal.apply(model, -5.0) == pytest.approx(0.2)
    assert cal.apply(model, 9.0) == pytest.approx(0.6)


def test_recovers_sigmoid():
    pairs, _, _ = _sigmoid_pairs(5000, 0)
    model = cal.fit(pairs)
    grid = np.linspace(0, 50, 501)
    truth = 1 / (1 + np.exp(-(grid - 25) / 5))
    assert np.abs(model(grid) - truth).mean() < 0.05
    assert model(25.0) == pytest.approx(0.5, abs=0.05)


def test_exact_cubic_recovered():
    m = np.linspace(-1, 1, 41)
    y = np.tile([0, 1], 21)[:41]
    # least squares is a projection: fitting y twice is the same as once
    a = cal.fit(np.column_stack([m, y]))
    assert a.score_domain == (-1.0, 1.0)
    assert len(a.coefficients) == 4


def test_single_class_rejected():
    with pytest.raises(ValueError, match="single-class"):
        cal.fit([(float(i), 1) for i in range(10)])


def test_constant_score_rejected():
    with pytest.raises(ValueError, match="machine scores are equal"):
        cal.fit([(0.5, i % 2) for i in range(10)])


def test_too_few_pairs():
    with pytest.raises(ValueError, match="at least 8"):
        cal.fit([(0.1, 0), (0.9, 1)])


def test_non_binary_labels_rejected():
    with pytest.raises(ValueError):
        cal.fit([(float(i), 0.5) for i in range(10)])


def test_step_labels_monotone_no_warning():
    # nine 1s at a common score and a single 0 at the extreme low score
    pairs = [(10.0, 1)] * 9 + [(0.0, 0)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = cal.fit(pairs)
    assert model.monotone_on_domain
    grid = np.linspace(0, 10, 1001)
    assert (np.diff(model(grid)) >= 0).all()
    assert model(0.0) == pytest.approx(0.0, abs=1e-9)
    assert model(10.0) == pytest.approx(1.0, abs=1e-9)
    # two distinct scores: the fit drops to a line
    assert model.coefficients[2:] == (0.0, 0.0)


def test_step_labels_with_spread_scores_flagged():
    # with the 1s spread out, an unconstrained cubic overshoots and dips back
    pairs = [(float(i), 1) for i in range(1, 10)] + [(0.0, 0)]
    with pytest.warns(NonMonotoneCalibrationWarning):
        model = cal.fit(pairs)
    assert not model.monotone_on_domain
    assert model(0.0) < 0.2 and model(9.0) > 0.9


def test_non_monotone_warns():
    # labels that rise then fall cannot be fit by a monotone cubic
    m = np.linspace(0, 1, 40)
    y = ((m > 0.3) & (m < 0.7)).astype(int)
    with pytest.warns(NonMonotoneCalibrationWarning):
        model = cal.fit(np.column_stack([m, y]))
    assert not model.monotone_on_domain


def test_order_invariant():
    pairs, _, _ = _sigmoid_pairs(400, 1)
    perm = np.random.default_rng(2).permutation(len(pairs))
    a = cal.fit(pairs)
    b = cal.fit(pairs[perm])
    assert a.coefficients == b.coefficients


def test_refit_on_own_outputs_idempotent():
    pairs, _, m = _sigmoid_pairs(400, 3)
    model = cal.fit(pairs)
    # least squares on fitted values returns the same polynomial
    x = np.linspace(*model.score_domain, 200)
    coef = np.polynomial.polynomial.polyfit(x, np.polynomial.polynomial.polyval(x, model.coefficients), 3)
    np.testing.assert_allclose(coef, model.coefficients, atol=1e-6)


def test_weights_matter_and_unit_weights_do_not():
    pairs, _, _ = _sigmoid_pairs(300, 4)
    plain = cal.fit(pairs)
    unit = cal.fit(pairs, weights=np.ones(len(pairs)))
    np.testing.assert_allclose(plain.coefficients, unit.coefficients, rtol=1e-10, atol=1e-12)
    w = np.where(pairs[:, 0] > 25, 10.0, 1.0)
    assert not np.allclose(cal.fit(pairs, weights=w).coefficients, plain.coefficients)


def test_duplicated_pairs_equal_weight_two():
    pairs, _, _ = _sigmoid_pairs(200, 5)
    doubled = cal.fit(np.vstack([pairs, pairs]))
    weighted = cal.fit(pairs, weights=np.full(len(pairs), 2.0))
    np.testing.assert_allclose(doubled.coefficients, weighted.coefficients, rtol=1e-8, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=8, max_size=60))
def test_fit_output_always_in_unit_interval(pairs):
    scores = {p[0] for p in pairs}
    labels = {p[1] for p in pairs}
    if len(scores) < 2 or len(labels) < 2:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneCalibrationWarning)
        model = cal.fit(pairs)
    out = model(np.linspace(-1, 2, 50))
    assert ((out >= 0) & (out <= 1)).all()


def test_json_round_trip(tmp_path):
    pairs, _, _ = _sigmoid_pairs(300, 6)
    model = cal.fit(pairs)
    assert CalibrationModel.from_json(model.to_json()) == model
    path = tmp_path / "cal.json"
    model.save(path)
    assert CalibrationModel.load(path) == model


def test_bad_model_rejected():
    with pytest.raises(ValueError):
        CalibrationModel((0, 1, 0), (0, 1))
    with pytest.raises(ValueError):
        CalibrationModel((0, 1, 0, 0), (1, 1))


def test_annotate_soft():
    ds = make_dataset(SEVEN)
    model = CalibrationModel((0, 1, 0, 0), (0, 1))
    scores = {str(i): 0.1 * k for k, i in enumerate(ds.ids)}
    out = annotate_soft(ds, model, scores)
    np.testing.assert_allclose(out.soft_tp_prob, [0.1 * k for k in range(len(ds))])
    np.testing.assert_array_equal(out.hard_label, ds.hard_label)


def test_annotate_soft_subset_and_empty():
    ds = make_dataset(SEVEN)
    model = CalibrationModel((0, 1, 0, 0), (0, 1))
    same = annotate_soft(ds, model, {}, ids=[])
    assert np.isnan(same.soft_tp_prob).all()
    first = str(ds.ids[0])
    part = annotate_soft(ds, model, {first: 5.0}, ids=[first])
    assert part.soft_tp_prob[0] == 1.0  # clamped to the domain maximum
    assert np.isnan(part.soft_tp_prob[1:]).all()


def test_annotate_soft_missing_ids():
    ds = make_dataset(SEVEN)
    model = CalibrationModel((0, 1, 0, 0), (0, 1))
    with pytest.raises(KeyError, match="no machine score"):
        annotate_soft(ds, model, {str(ds.ids[0]): 0.3})
    with pytest.raises(KeyError, match="not in dataset"):
        annotate_soft(ds, model, {}, ids=["nope"])
