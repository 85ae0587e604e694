"""Smoke tests for the python bindings: a few representative calls per
module family, checked against independently known values."""

import json
import math
import os
import tempfile

import pytest

import embasin


def test_scalar_kernels():
    assert embasin.omega(0.0) == 0.5
    assert embasin.omega(1.0) == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-15)
    assert embasin.omega_d1(0.0) == 0.5
    assert embasin.std_normal_cdf(-1.0) == pytest.approx(0.15865525393145705, abs=1e-14)
    # P(chi^2_4 > 8) = 5 e^{-4} in closed form.
    assert embasin.chi_square_upper_tail(4, 8.0) == pytest.approx(
        5.0 * math.exp(-4.0), rel=1e-13
    )
    with pytest.raises(Exception):
        embasin.omega(float("nan"))


def test_bounds_and_quadrature():
    assert embasin.gamma_contraction(100.0, 6.0) < 1.0
    assert embasin.gamma_contraction(100.0, 6.0) == pytest.approx(
        98496.0 * math.exp(-((100.0 / 6.0) ** 2) / 16.0), rel=1e-14
    )
    assert embasin.lemma_omega_lower_bound(0.5, 100.0, 6.0) == pytest.approx(
        1.0 - math.exp(-((0.5 * 100.0 / 6.0) ** 2) / 5.0), rel=1e-14
    )
    assert embasin.expect_omega(1.0, 1.0) == pytest.approx(
        0.77520024539666358514, abs=1e-12
    )
    nodes, weights = embasin.gh_rule(61)
    assert len(nodes) == 61
    assert sum(weights) == pytest.approx(math.sqrt(math.pi), rel=1e-13)


def test_dataset_and_em_run():
    model = embasin.MixtureModel([10.0, 0.0, 0.0, 0.0], 1.0)
    assert model.dim() == 4
    assert model.snr() == 10.0
    data = embasin.sample_dataset(model, 2000, 7)
    points = data.points()
    assert data.n() == 2000
    assert len(points) == 2000
    assert len(points[0]) == 4

    theta0 = [8.0, 1.0, 0.0, 0.0]
    trace = embasin.run_em(theta0, data, model)
    assert trace["stop_reason"] == "step_tol"
    # The run contracts by a large factor at this signal strength.
    assert trace["final_error"] < 0.05 * trace["errors"][0]
    assert all(trace["in_region"])

    result = embasin.multi_start(data, model, 3, "known_norm", 5)
    assert len(result["final_errors"]) == 3
    assert result["best_final_error"] <= min(result["final_errors"]) + 1e-15


def test_population_operator_fixed_point():
    model = embasin.MixtureModel([5.0, 0.0], 1.0)
    image = embasin.pop_em([5.0, 0.0], model)
    assert math.dist(image, [5.0, 0.0]) <= 1e-8 * 5.0


def test_run_experiment_smoke():
    with tempfile.TemporaryDirectory() as tmp:
        config = {"experiment": "kernels-selftest", "out_dir": os.path.join(tmp, "run")}
        report = embasin.run_experiment(json.dumps(config))
        assert report["all_pass"] is True
        assert report["experiment"] == "kernels-selftest"
        assert any(a["name"] for a in report["assertions"])
        summary_path = report["artifacts"][-1]
        with open(summary_path, "r", encoding="utf-8") as handle:
            summary = json.load(handle)
        assert summary["experiment"] == "kernels-selftest"
