"""Tests for the rate-measurement harness."""

import numpy as np
import pytest

from cltlab.experiments import (
    ExperimentError,
    ExperimentPlan,
    berry_esseen_cascade,
    calibration_floor,
    run_experiment,
    theoretical_exponent,
    upper_bound_consistency,
)
from cltlab.metrics import EmpiricalDistribution, GaussianLaw, wasserstein_vs_gaussian
from cltlab.processes import IIDBaseline, InnovationLaw, ProcessSpec

IID_GAUSS = ProcessSpec(IIDBaseline(InnovationLaw("gaussian")))
SMALL_GRID = (64, 128, 256, 512)


def small_plan(**kw):
    args = dict(process=IID_GAUSS, p=3.0, r_list=(1.0,), n_grid=SMALL_GRID, m=500, seed=5)
    args.update(kw)
    return ExperimentPlan(**args)


# ---------------------------------------------------------------------------
# exponents and plan validation


def test_theoretical_exponents():
    out = theoretical_exponent(1.0, 3.0)
    assert out == {"zeta_exp": -0.5, "w_exp": -0.5, "log_factor": True}  # [PAPER]
    assert theoretical_exponent(1.0, 2.5)["w_exp"] == -0.25  # [DERIVED]
    assert abs(theoretical_exponent(3.0, 3.0)["w_exp"] + 1.0 / 6.0) < 1e-15  # [DERIVED]
    assert theoretical_exponent(3.0, 3.0)["log_factor"] is False
    # below the window the smooth-class exponent degrades to -r/2
    assert theoretical_exponent(0.3, 2.5)["zeta_exp"] == -0.15
    with pytest.raises(ExperimentError):
        theoretical_exponent(1.0, 3.5)


def test_plan_validation():
    with pytest.raises(ExperimentError):
        small_plan(r_list=(0.4,))  # below p - 2
    with pytest.raises(ExperimentError):
        small_plan(r_list=(2.5,), target="sigma2")  # r > 2 needs sigma_n2
    small_plan(r_list=(2.5,), target="sigma_n2")
    with pytest.raises(ExperimentError):
        small_plan(n_grid=(64, 96))  # not powers of two
    with pytest.raises(ExperimentError):
        small_plan(p=2.0)


# ---------------------------------------------------------------------------
# calibration floor


def test_floor_decreases_with_sample_size():
    big = calibration_floor(10**4, 1.0, reps=20)
    small = calibration_floor(100, 1.0, reps=20)
    assert 0.0 < big["mean"] < small["mean"]  # [TRIVIAL] empirical consistency


def test_floor_requires_min_m():
    with pytest.raises(ExperimentError):
        calibration_floor(50, 1.0)


def test_floor_cached_and_deterministic():
    a = calibration_floor(200, 1.0, reps=10)
    b = calibration_floor(200, 1.0, reps=10)
    assert a is b


# ---------------------------------------------------------------------------
# experiment runs


def test_iid_run_sits_at_floor_and_replays():
    plan = small_plan()
    res = run_experiment(plan)
    for pt in res.points:
        assert pt["value"] < 2.5 * pt["floor"]
    assert res.fits[1.0]["verdict"] in ("upper-bound-consistent", "inconclusive")
    res2 = run_experiment(plan)
    assert [pt["value"] for pt in res2.points] == [pt["value"] for pt in res.points]  # [TRIVIAL] replay
    assert res2.fits == res.fits


def test_log_factor_fit_reported():
    res = run_experiment(small_plan())
    assert "log_fit_unfiltered" in res.fits[1.0]  # (r, p) = (1, 3) case


def test_miscalibrated_variance_increases_distance():
    gen = np.random.default_rng(9)
    emp = EmpiricalDistribution(gen.standard_normal(2000))
    good = wasserstein_vs_gaussian(emp, GaussianLaw(1.0), 1.0).value
    bad = wasserstein_vs_gaussian(emp, GaussianLaw(1.25), 1.0).value
    assert good < bad


def test_pareto_run_detects_decay():
    spec = ProcessSpec(IIDBaseline(InnovationLaw("symmetric_pareto", q=2.5)))
    plan = ExperimentPlan(spec, p=2.5, r_list=(1.0,), n_grid=(64, 128, 256, 512, 1024), m=2000, seed=2)
    res = run_experiment(plan)
    assert res.fits[1.0]["slope_unfiltered"] < -0.05


# ---------------------------------------------------------------------------
# upper-bound consistency


def test_consistency_exact_power_law():
    n = np.array([64.0, 128.0, 256.0, 512.0])
    out = upper_bound_consistency(n, 3.0 * n**-0.5, -0.5)
    assert abs(out["C_star"] - 3.0) < 1e-12 and out["verdict"] == "pass"  # [TRIVIAL]


def test_consistency_detects_excess_growth():
    n = np.array([64.0, 128.0, 256.0, 512.0, 1024.0])
    out = upper_bound_consistency(n, n**-0.2, -0.5)  # decays slower than claimed
    assert out["verdict"] == "fail"


def test_consistency_single_point_inconclusive():
    out = upper_bound_consistency([64.0], [0.1], -0.5)
    assert out["verdict"] == "inconclusive"


# ---------------------------------------------------------------------------
# distance cascade


def test_cascade_requires_matching_r():
    # a p = 2.5 result without the r = 0.5 curve cannot be cascaded
    plan = small_plan(p=2.5, r_list=(1.0,))
    with pytest.raises(ExperimentError):
        berry_esseen_cascade(run_experiment(plan))


def test_cascade_bounds_dominate_measured():
    plan = small_plan(p=2.5, r_list=(0.5,), m=1000)
    out = berry_esseen_cascade(run_experiment(plan))
    assert abs(out["cascade_exponent"] + 1.0 / 6.0) < 1e-15  # [PAPER] p = 2.5
    assert abs(out["comparison_exponent"] + 1.0 / 14.0) < 1e-15  # [DERIVED]
    for row in out["rows"]:
        assert row["kolmogorov_measured"] <= row["kolmogorov_bound"] + 1e-12
        assert row["prokhorov_bound"] == pytest.approx(row["w_value"] ** (1.0 / 1.5))
