"""Study drivers: gap, table1, trajectories, clt-check, and their outputs."""

import json
import math

import numpy as np
import pytest

from spnsched.bounds import maxweight_lower_bound, thm5_window
from spnsched.errors import ConfigurationError
from spnsched.experiments import (_aggregate, _child_seed, run_clt_check,
                                  run_gap_study, run_table1_study,
                                  run_trajectory_study, wilson_interval)
from spnsched.ioutil import read_stats_csv
from spnsched.scheduling import finite_set

GAP_CONSTANT = 2.0 - 1.0 / (10.0 * math.sqrt(2.0))


# ------------------------------------------------------------ small helpers


def test_wilson_interval_frozen():
    lo, hi = wilson_interval(5, 10)
    assert lo == pytest.approx(0.23658959361548731, rel=1e-12)
    assert hi == pytest.approx(0.7634104063845126, rel=1e-12)


def test_wilson_interval_edges():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(10, 10)
    assert hi == 1.0 and lo > 0.7
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and hi < 0.3


def test_child_seed_stable_and_distinct():
    assert _child_seed(7, 0, 3) == _child_seed(7, 0, 3)
    seen = {_child_seed(7, s, r) for s in range(4) for r in range(4)}
    assert len(seen) == 16


def test_aggregate():
    mean, se = _aggregate(np.array([[1.0, 3.0]]))
    assert np.array_equal(mean, [1.0, 3.0])
    assert np.array_equal(se, [0.0, 0.0])
    mean, se = _aggregate(np.array([[1.0, 3.0], [3.0, 5.0]]))
    assert np.array_equal(mean, [2.0, 4.0])
    assert se == pytest.approx([1.0, 1.0])


# ------------------------------------------------------------------ gap study


def test_gap_study_deterministic_case(tmp_path):
    out = tmp_path / "gap"
    res = run_gap_study(10.0, 0.0, 120, 5, 0, out_dir=out)
    assert res.summary["replications_requested"] == 5
    assert res.summary["replications_effective"] == 1
    assert res.summary["tie_counters"] == {"maxweight": 0, "lyapopt": 0}

    mw, ly = res.stats
    assert mw.policy == "maxweight" and ly.policy == "lyapopt"
    # the lookahead policy settles instantly on the small stationary cycle
    assert np.max(np.abs(ly.mean_total[1:] - GAP_CONSTANT)) <= 1e-9
    assert mw.mean_total[-1] > 3 * GAP_CONSTANT

    assert len(res.extra_rows) == 120
    t0, label, value, se, sumsq = res.extra_rows[0]
    assert (t0, label, se) == (1, "thm5_bound", 0.0) and math.isnan(sumsq)
    t100 = res.extra_rows[100 - 1]
    assert t100[0] == 100
    assert t100[2] == maxweight_lower_bound(10.0, 0.0, 100).value

    digest, rows = read_stats_csv(out / "stats.csv")
    assert digest == res.digest
    assert len(rows) == 2 * 121 + 120
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config_digest"] == res.digest
    assert summary["version"].startswith("spnsched-")
    assert summary["bound_at_T"]["window"] is not None


def test_gap_study_rerun_byte_identical(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    run_gap_study(10.0, 0.0, 60, 3, 42, out_dir=d1)
    run_gap_study(10.0, 0.0, 60, 3, 42, out_dir=d2)
    assert (d1 / "stats.csv").read_bytes() == (d2 / "stats.csv").read_bytes()
    assert (d1 / "summary.json").read_bytes() == (d2 / "summary.json").read_bytes()


def test_gap_study_noisy_case():
    res = run_gap_study(10.0, 1.0, 60, 4, 3)
    assert res.summary["replications_effective"] == 4
    mw = res.stats[0]
    assert mw.mean_total.shape == (61,)
    assert np.any(mw.se_total > 0)
    lo, hi = res.summary["window"]
    assert (lo, hi) == (pytest.approx(thm5_window(10.0, 1.0)[0]),
                        pytest.approx(thm5_window(10.0, 1.0)[1]))


def test_gap_study_validation():
    with pytest.raises(ConfigurationError):
        run_gap_study(10.0, 0.0, 10, 0, 0)
    with pytest.raises(ConfigurationError):
        run_gap_study(10.0, -1.0, 10, 2, 0)


# ---------------------------------------------------------------- table1 study


def test_table1_structure(tmp_path):
    out = tmp_path / "t1"
    res = run_table1_study(2, 5, 50, 2, 11, out_dir=out)
    props = res.summary["proportions"]
    assert set(props) == {"le_1", "le_0p9", "le_0p5"}
    le1 = props["le_1"]
    assert le1["cutoff"] == 1.0
    assert le1["kept"] + res.summary["dropped_scenarios"] == 5
    if le1["kept"]:
        lo, hi = le1["wilson_ci"]
        assert lo <= le1["fraction"] <= hi
    assert len(res.summary["scenarios"]) == 5
    for rec in res.summary["scenarios"]:
        assert len(rec["lambda"]) == 2
        assert set(rec["final_totals"]) == {"maxweight", "lyapopt"}
    assert {rs.scenario for rs in res.stats} == {"aggregate"}
    digest, rows = read_stats_csv(out / "stats.csv")
    assert digest == res.digest and len(rows) == 2 * 51


def test_table1_validation():
    with pytest.raises(ConfigurationError):
        run_table1_study(1, 5, 50, 2, 0)
    with pytest.raises(ConfigurationError):
        run_table1_study(2, 0, 50, 2, 0)


# ------------------------------------------------------------ trajectory study


def test_trajectory_pinned_comparison():
    res = run_trajectory_study(3, 500, 20, 0)
    final = res.summary["final_mean_sumsq"]
    assert final["lyapopt"] <= final["maxweight"]
    assert final["lyapopt"] == pytest.approx(814.65, abs=0.5)
    assert final["maxweight"] == pytest.approx(1047.4, abs=0.5)
    fit = res.summary["growth_fit"]
    for variant in ("maxweight", "lyapopt"):
        assert set(fit[variant]) == {"coefficient", "rms_residual"}
        assert fit[variant]["coefficient"] > 0
    assert len(res.summary["lambda"]) == 3


def test_trajectory_scenario_override():
    scen = {"set": finite_set([[2, 0], [0, 2]]).to_json(),
            "lambda": [1.0, 0.9]}
    res = run_trajectory_study(2, 40, 2, 1, scenario=scen)
    assert res.summary["lambda"] == [1.0, 0.9]
    bad = {"set": scen["set"], "lambda": [1.0, 0.9, 0.1]}
    with pytest.raises(ConfigurationError):
        run_trajectory_study(2, 40, 2, 1, scenario=bad)


# ------------------------------------------------------------------ clt check


def test_clt_check_small_horizon_matches_exact_mean():
    # n=2, B=C=1: at T=2 the normalized overshoot has a short exact form
    exact = 4.0 * math.sqrt(2.0) / 9.0
    res = run_clt_check(2, 1.0, 1.0, [2], 6000, 7)
    est = res.summary["estimates"]["2"]
    assert abs(est["normalized_mean"] - exact) <= 4 * est["se"]
    assert est["se"] > 0
    ref = res.summary["reference_coefficient"]
    assert est["ratio_to_reference"] == pytest.approx(
        est["normalized_mean"] / ref)


def test_clt_check_deterministic_arrivals_have_no_overshoot():
    res = run_clt_check(2, 1.0, 0.0, [5, 20], 10, 3)
    for t, label, estimate, se, sumsq in res.extra_rows:
        assert label == "overshoot_mc"
        assert estimate == 0.0 and se == 0.0 and math.isnan(sumsq)
        assert res.summary["estimates"][str(t)]["ratio_to_reference"] == 0.0


def test_clt_check_sorts_and_dedupes_horizons():
    res = run_clt_check(2, 1.0, 1.0, [9, 5, 5], 50, 3)
    assert [row[0] for row in res.extra_rows] == [5, 9]
    assert sorted(res.summary["estimates"]) == ["5", "9"]


def test_clt_check_validation():
    with pytest.raises(ConfigurationError):
        run_clt_check(2, 1.0, 1.0, [1, 5], 50, 0)
    with pytest.raises(ConfigurationError):
        run_clt_check(2, 1.0, 1.0, [5], 1, 0)
