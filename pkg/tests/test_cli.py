import json
import os

import numpy as np
import pytest

from abba import CalibrationModel, Thresholds, annotate_soft, ingest, ss_rfpr, ss_rrecall
from abba import calibration as cal
from abba.cli import Report, main
from abba.data import write_records

from conftest import make_dataset

DATA = os.path.join(os.path.dirname(__file__), "data")
ABBA_CFG = {"p_positive": 0.3, "recall_A": 0.8, "fpr_A": 0.1, "recall_B": 0.82, "fpr_B": 0.075,
            "cross_tp_given_A": 0.95, "cross_fp_given_A": 0.5, "n_streams": 20000,
            "n_labeled": 2000, "seed": 7}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def sim(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(ABBA_CFG))
    data = tmp_path / "sim.jsonl"
    code, out, _ = run(capsys, "simulate", "abba", "--config", cfg, "--output", data)
    assert code == 0
    return data, f"{data}.meta.json", json.loads(out)


def test_simulate_summary_and_determinism(sim, tmp_path, capsys):
    data, meta, summary = sim
    assert summary["ground_truth"] == {"rRecall": pytest.approx(1.025), "rFPR": pytest.approx(0.75)}
    assert summary["traffic"] == {"streams_A": 10000, "streams_B": 10000}
    again = tmp_path / "again.jsonl"
    run(capsys, "simulate", "abba", "--config", tmp_path / "cfg.json", "--output", again)
    assert again.read_bytes() == data.read_bytes()
    assert open(f"{again}.meta.json", "rb").read() == open(meta, "rb").read()


def test_simulate_inconsistent_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({**ABBA_CFG, "fpr_B": 0.05, "cross_fp_given_A": 1.0}))
    code, _, err = run(capsys, "simulate", "abba", "--config", cfg, "--output", tmp_path / "x")
    assert code == 2
    assert "fpr_A*cross_fp_given_A/fpr_B" in err


def test_simulate_bad_json_and_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{nope")
    assert run(capsys, "simulate", "abba", "--config", cfg, "--output", tmp_path / "x")[0] == 2
    cfg.write_text(json.dumps({**ABBA_CFG, "extra": 1}))
    code, _, err = run(capsys, "simulate", "abba", "--config", cfg, "--output", tmp_path / "x")
    assert code == 2 and "extra" in err


def test_estimate_all_methods(sim, capsys):
    data, meta, _ = sim
    code, out, _ = run(capsys, "estimate", "--input", data, "--ta", 0.5, "--tb", 0.5,
                       "--method", "direct", "--method", "approx", "--method", "abtest",
                       "--traffic", meta, "--bootstrap", 200, "--seed", 1, "--format", "json")
    assert code == 0
    report = Report.from_json(out)
    got = {(e.metric, e.method) for e in report.estimates}
    assert got == {("rRecall", "direct"), ("rFPR", "direct"), ("rRecall", "approx"),
                   ("rFPR", "approx"), ("rFPR", "ab_test")}
    assert report.seed == 1
    assert report.excluded == sum(1 for r in ingest(str(data)) if r.hard_label is None)
    for e in report.estimates:
        assert e.ci_low <= e.point <= e.ci_high and e.replicates + e.undefined_replicates == 200


def test_estimate_table_output(sim, capsys):
    data, _, _ = sim
    code, out, _ = run(capsys, "estimate", "--input", data, "--ta", 0.5, "--tb", 0.5, "--bootstrap", 0)
    assert code == 0
    assert "rFPR" in out and "approx" in out and "seed=None" in out


def test_seed_required_for_bootstrap(sim, capsys):
    data, _, _ = sim
    code, _, err = run(capsys, "estimate", "--input", data, "--ta", 0.5, "--tb", 0.5)
    assert code == 2 and "--seed" in err


def test_abtest_needs_traffic(sim, capsys):
    data, _, _ = sim
    code, _, err = run(capsys, "estimate", "--input", data, "--ta", 0.5, "--tb", 0.5,
                       "--method", "abtest", "--bootstrap", 0)
    assert code == 2 and "--traffic" in err


def test_a_vs_a_all_ratios_exactly_one(tmp_path, capsys):
    rows = [("A", 1, 0.9), ("A", 0, 0.9), ("A", 1, 0.2), ("A", 0, 0.1)]
    rows = rows + [("B",) + r[1:] for r in rows]
    path = tmp_path / "ava.jsonl"
    write_records(make_dataset(rows), str(path))
    traffic = tmp_path / "t.json"
    traffic.write_text(json.dumps({"streams_A": 100, "streams_B": 100}))
    code, out, _ = run(capsys, "estimate", "--input", path, "--ta", 0.5, "--tb", 0.5,
                       "--method", "direct", "--method", "approx", "--method", "abtest",
                       "--traffic", traffic, "--bootstrap", 50, "--seed", 0, "--format", "json")
    assert code == 0
    for e in Report.from_json(out).estimates:
        assert e.point == 1.0


def _sparse_fp(tmp_path):
    # no B-arm false accept is accepted by A: direct rFPR divides by zero
    rows = ([("A", 1, 0.9)] * 6 + [("A", 0, 0.9)] * 3 + [("A", 0, 0.1)] * 2 + [("A", 1, 0.1)]
            + [("B", 1, 0.9)] * 5 + [("B", 0, 0.1)] * 3 + [("B", 1, 0.1)])
    path = tmp_path / "sparse.jsonl"
    write_records(make_dataset(rows), str(path))
    return path


def test_sparse_fp_partial_report(tmp_path, capsys):
    path = _sparse_fp(tmp_path)
    code, out, _ = run(capsys, "estimate", "--input", path, "--ta", 0.5, "--tb", 0.5,
                       "--bootstrap", 0, "--format", "json")
    assert code == 0
    report = Report.from_json(out)
    got = {(e.metric, e.method) for e in report.estimates}
    assert ("rFPR", "approx") in got and ("rFPR", "direct") not in got
    assert any("NFP_AB_on_B" in w and "approx" in w for w in report.warnings)


def test_undefined_direct_only_exits_3(tmp_path, capsys):
    path = _sparse_fp(tmp_path)
    code, _, err = run(capsys, "estimate", "--input", path, "--ta", 0.5, "--tb", 0.5,
                       "--method", "direct", "--bootstrap", 0)
    assert code == 3 and "rFPR" in err


def test_malformed_input_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x"}\n')
    code, _, err = run(capsys, "estimate", "--input", path, "--ta", 0.5, "--tb", 0.5, "--bootstrap", 0)
    assert code == 2 and "line 1" in err
    assert run(capsys, "estimate", "--input", tmp_path / "missing", "--ta", 0.5, "--tb", 0.5,
               "--bootstrap", 0)[0] == 2


def test_allocate_worked_example(tmp_path, capsys):
    strata = tmp_path / "strata.json"
    strata.write_text(json.dumps([{"name": "agree", "weight": 0.9, "expected_fpr": 0.05},
                                  {"name": "disagree", "weight": 0.1, "expected_fpr": 0.2}]))
    code, out, _ = run(capsys, "allocate", "--budget", 10000, "--strata", strata,
                       "--overall-p", 0.08, "--format", "json")
    assert code == 0
    plan = json.loads(out)["extra"]["plan"]
    assert plan["allocation"] == {"agree": 8306, "disagree": 1694}
    assert plan["efficiency"] == pytest.approx(0.242, abs=1e-3)
    assert run(capsys, "allocate", "--budget", 10, "--strata", tmp_path / "none.json")[0] == 2


def test_single_point_sweep_equals_estimate(sim, capsys):
    data, _, _ = sim
    _, out, _ = run(capsys, "sweep", "--input", data, "--ta", 0.5, "--tb-grid", "0.5:0.5:0.1",
                    "--deployed-tb", 0.5, "--format", "json")
    rows = json.loads(out)["sweep"]
    assert len(rows) == 1
    _, out, _ = run(capsys, "estimate", "--input", data, "--ta", 0.5, "--tb", 0.5,
                    "--method", "direct", "--bootstrap", 0, "--format", "json")
    est = {e["metric"]: e["point"] for e in json.loads(out)["estimates"]}
    assert rows[0]["rRecall"]["point"] == est["rRecall"]
    assert rows[0]["rFPR"]["point"] == est["rFPR"]


def test_sweep_table_has_regions(sim, capsys):
    data, _, _ = sim
    code, out, _ = run(capsys, "sweep", "--input", data, "--ta", 0.5, "--tb-grid", "0.5:0.8:0.1",
                       "--deployed-tb", 0.5)
    assert code == 0
    assert len([l for l in out.splitlines() if l.strip().startswith("0.")]) == 4
    assert "region" in out


def test_sweep_bad_grid(sim, capsys):
    data, _, _ = sim
    assert run(capsys, "sweep", "--input", data, "--ta", 0.5, "--tb-grid", "0.5:0.1")[0] == 2


def _sigmoid_corpus(tmp_path):
    from abba.simulation import SsSimConfig, simulate_ss
    ds = simulate_ss(SsSimConfig(0.4, 0.2, 0.9, 0.3, 0.8, 0.6, n_per_arm=1500, seed=3))
    rng = np.random.default_rng(0)
    # machine score in [0, 50], TP probability sigmoid in the score
    m = np.clip(25 + np.where(ds.hard_label == 1, 8, -8) + 6 * rng.standard_normal(len(ds)), 0, 50)
    scores = {str(i): float(s) for i, s in zip(ds.ids, m)}
    unlabeled = ds.with_soft_labels(np.full(len(ds), np.nan))
    data = tmp_path / "corpus.jsonl"
    write_records(unlabeled, str(data))
    score_file = tmp_path / "scores.json"
    score_file.write_text(json.dumps(scores))
    return unlabeled, scores, data, score_file


@pytest.mark.filterwarnings("ignore::abba.calibration.NonMonotoneCalibrationWarning")
def test_calibrate_then_ss_estimate_bit_identical(tmp_path, capsys):
    ds, scores, data, score_file = _sigmoid_corpus(tmp_path)
    model_path = tmp_path / "model.json"
    code, _, _ = run(capsys, "calibrate", "--input", data, "--machine-scores", score_file,
                     "--model-output", model_path)
    assert code == 0
    in_memory = cal.fit([(scores[str(i)], int(l)) for i, l in zip(ds.ids, ds.hard_label)])
    loaded = CalibrationModel.load(model_path)
    assert loaded == in_memory
    a = annotate_soft(ds, in_memory, scores)
    b = annotate_soft(ds, loaded, scores)
    np.testing.assert_array_equal(a.soft_tp_prob, b.soft_tp_prob)

    code, out, _ = run(capsys, "ss-estimate", "--input", data, "--ta", 0.5, "--tb", 0.5,
                       "--calibration", model_path, "--machine-scores", score_file,
                       "--bootstrap", 0, "--format", "json")
    assert code == 0
    got = {e["metric"]: e["point"] for e in json.loads(out)["estimates"]}
    th = Thresholds(0.5, 0.5)
    assert got["rRecall"] == ss_rrecall(a, th).point
    assert got["rFPR"] == ss_rfpr(a, th).point


def test_ss_estimate_missing_soft_labels(tmp_path, capsys):
    _, scores, data, score_file = _sigmoid_corpus(tmp_path)
    code, _, err = run(capsys, "ss-estimate", "--input", data, "--ta", 0.5, "--tb", 0.5, "--bootstrap", 0)
    assert code == 3 and "A00000000" in err
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps(dict(list(scores.items())[:10])))
    model = tmp_path / "m.json"
    CalibrationModel((0, 0.02, 0, 0), (0, 50)).save(model)
    code, _, err = run(capsys, "ss-estimate", "--input", data, "--ta", 0.5, "--tb", 0.5, "--bootstrap", 0,
                       "--calibration", model, "--machine-scores", partial)
    assert code == 3 and "no machine score" in err


def test_report_round_trip(sim, capsys):
    data, _, _ = sim
    _, out, _ = run(capsys, "sweep", "--input", data, "--ta", 0.5, "--tb-grid", "0.5:0.7:0.1",
                    "--deployed-tb", 0.5, "--bootstrap", 30, "--seed", 2, "--format", "json")
    report = Report.from_json(out)
    assert Report.from_json(report.to_json()) == report
    assert report.to_json() == out.strip()


def _normalise(d):
    d = json.loads(json.dumps(d))
    d["meta"].pop("version")
    return d


def test_golden_report(capsys):
    """Fixed-seed report matches the checked-in file (schema and values)."""
    code, out, _ = run(capsys, "estimate", "--input", os.path.join(DATA, "golden_input.jsonl"),
                       "--ta", 0.5, "--tb", 0.5, "--bootstrap", 200, "--seed", 11,
                       "--format", "json")
    assert code == 0
    with open(os.path.join(DATA, "golden_estimate.json")) as fh:
        golden = json.load(fh)
    got = json.loads(out)
    assert got["meta"]["command"] == golden["meta"]["command"]
    assert _normalise(got).keys() == _normalise(golden).keys()
    assert got["warnings"] == golden["warnings"]
    assert got["excluded"] == golden["excluded"]
    for g, e in zip(got["estimates"], golden["estimates"], strict=True):
        assert g.keys() == e.keys()
        for k, v in e.items():
            assert g[k] == (pytest.approx(v, rel=1e-12) if isinstance(v, float) else v)
