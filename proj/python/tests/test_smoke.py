import math

import numpy as np
import pytest

import encqr

SMALL = {
    "data": {"source": "synthetic", "kind": "heteroscedastic_daily", "length": 1200, "seed": 3},
    "split": {"train_fraction": 0.6, "val_fraction": 0.2, "test_fraction": 0.2},
    "regressor": {"kind": "quantile_forest", "n_trees": 5},
    "n_x": 24,
    "n_y": 12,
    "s": 12,
    "seed": 11,
}


def test_quantile_is_an_order_statistic():
    values = [5.0, 1.0, 4.0, 2.0, 3.0]
    assert encqr.empirical_quantile(values, 0.5) == 3.0
    assert encqr.empirical_quantile(values, 0.9) == 5.0
    assert encqr.empirical_quantile(values, 0.5, "plain") == 3.0
    with pytest.raises(encqr.EncqrError):
        encqr.empirical_quantile([], 0.5)


def test_scores_and_losses():
    assert encqr.asymmetric_scores(2, 5, 1) == (1, -4)
    assert encqr.cqr_score(2, 5, 6) == 1
    assert encqr.pinball_loss(1.0, 0.0, 0.9) == pytest.approx(0.9)


def test_metrics():
    assert encqr.cwc(0.884, 0.210, 0.1) == pytest.approx(0.784, abs=0.002)
    y = [0.0, 1.0, 2.0, 3.0]
    assert encqr.picp(y, [-1, 0, 0, 4], [1, 2, 3, 5]) == 0.75
    assert encqr.pinaw(y, [0, 0, 0, 0], [1, 1, 1, 1]) == pytest.approx(1 / 3)


def test_windows_and_plan():
    x, y, origins = encqr.make_sliding_windows(list(range(10)), 3, 2)
    assert x.shape == (6, 3) and y.shape == (6, 2)
    assert list(origins) == [3, 4, 5, 6, 7, 8]
    assert list(x[0]) == [0, 1, 2] and list(y[0]) == [3, 4]
    plan = encqr.plan_subsets(30, 3, 7, 3)
    assert plan["subsets"] == [(0, 10), (10, 20), (20, 30)]
    assert plan["residual_count"] == 9


def test_synthetic():
    g = encqr.gen_synthetic("heteroscedastic_daily", 480, 1)
    assert len(g["target"]) == 480
    assert np.all(g["true_lo"] <= g["true_hi"])
    assert encqr.heteroscedasticity_measure(g["target"]) > 0


def test_run_experiment():
    result = encqr.run_experiment(SMALL)
    report = result["report"]
    assert report["method"] == "encqr"
    assert report["n"] == len(result["trace"]["y"]) == 240
    assert 0.0 <= report["picp"] <= 1.0
    assert math.isfinite(report["cwc"])
    assert np.all(result["trace"]["lower"] <= result["trace"]["upper"])
    again = encqr.run_experiment(SMALL, ["method=enbpi"])
    assert again["report"]["method"] == "enbpi"


def test_bad_config_raises():
    with pytest.raises(encqr.EncqrError, match="unknown config key"):
        encqr.run_experiment({"alpah": 0.1})
    assert encqr.default_config()["alpha"] == 0.1
