from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dynfrail.mcmc import McmcConfig
from dynfrail.replication import (DEFAULT_SURVIVAL_TIMES, FitSpec, ReplicateResult, aggregate,
                                  arm_spec, correct_priors, pointwise_survival_rmse,
                                  replicate_seeds, run_scenario, sensitivity_suite, table_rows,
                                  true_baseline_survival)
from dynfrail.simulate import Scenario

NAMES = ["beta_11", "alpha_1", "nu"]
SMALL = Scenario(n=5)


def truth_curves(scenario, times):
    return np.vstack([true_baseline_survival(scenario, p, times)
                      for p in range(scenario.n_types + 1)])


def exact_fitter(dataset, spec, seed):
    t = SMALL.true_parameters(NAMES)
    est = np.array([t[n] for n in NAMES])
    return ReplicateResult(NAMES, est, est - 0.1, est + 0.1,
                           truth_curves(SMALL, spec.survival_times))


def noisy_fitter(dataset, spec, seed):
    rng = np.random.default_rng(seed)
    t = SMALL.true_parameters(NAMES)
    est = np.array([t[n] for n in NAMES]) + rng.normal(0.05, 0.2, len(NAMES))
    surv = truth_curves(SMALL, spec.survival_times) + rng.normal(0, 0.01)
    return ReplicateResult(NAMES, est, est - 0.3, est + 0.3, surv)


def flaky_fitter(dataset, spec, seed):
    if seed.spawn_key[0] == 1:
        raise FloatingPointError("replicate went bad")
    return exact_fitter(dataset, spec, seed)


@pytest.fixture
def spec():
    return FitSpec(correct_priors(SMALL), McmcConfig(iterations=10, burn_in=5, thin=1))


def test_exact_fitter_gives_zero_error(spec):
    rep = run_scenario(SMALL, spec, 4, 1, fitter=exact_fitter)
    np.testing.assert_allclose(rep.bias, 0, atol=1e-15)
    np.testing.assert_allclose(rep.sd, 0, atol=1e-15)
    np.testing.assert_allclose(rep.rmse, 0, atol=1e-15)
    np.testing.assert_array_equal(rep.coverage, 1.0)
    np.testing.assert_allclose(rep.survival_rmse, 0, atol=1e-15)
    assert rep.n_replicates == 4 and rep.n_failed == 0


def test_rmse_identity_with_population_sd(spec):
    rep = run_scenario(SMALL, spec, 6, 2, fitter=noisy_fitter)
    np.testing.assert_allclose(rep.rmse**2, rep.bias**2 + rep.sd**2, rtol=1e-12)


@given(arrays(float, (5, 3), elements=st.floats(-10, 10)))
def test_rmse_identity_property(est):
    truth = {n: 0.5 for n in NAMES}
    times = np.array([0.5, 1.0])
    results = [ReplicateResult(NAMES, e, e - 1, e + 1, truth_curves(SMALL, times)) for e in est]
    rep = aggregate(results, truth, SMALL, times, [])
    np.testing.assert_allclose(rep.rmse**2, rep.bias**2 + rep.sd**2, rtol=1e-9, atol=1e-9)
    assert np.all((rep.coverage >= 0) & (rep.coverage <= 1))


def test_pointwise_survival_rmse_examples():
    truth = np.array([0.9, 0.5])
    assert np.all(pointwise_survival_rmse([truth, truth], truth) == 0)
    np.testing.assert_allclose(pointwise_survival_rmse([truth + 0.02], truth), [0.02, 0.02])
    np.testing.assert_allclose(pointwise_survival_rmse([truth + 0.1, truth - 0.1], truth),
                               [0.1, 0.1])


def test_seeds_and_order_invariance(spec):
    seeds = replicate_seeds(7, 3)
    assert [s.spawn_key for s, _ in seeds] == [(0, 0), (1, 0), (2, 0)]
    a = run_scenario(SMALL, spec, 4, 3, fitter=noisy_fitter)
    b = run_scenario(SMALL, spec, 4, 3, fitter=noisy_fitter, workers=2)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    # the first replicates do not depend on how many follow
    c = run_scenario(SMALL, spec, 6, 3, fitter=noisy_fitter)
    np.testing.assert_array_equal(a.estimates, c.estimates[:4])


def test_failures_are_recorded(spec):
    rep = run_scenario(SMALL, spec, 3, 1, fitter=flaky_fitter)
    assert rep.n_replicates == 3 and rep.n_failed == 1
    assert "replicate 1" in rep.failures[0] and "FloatingPointError" in rep.failures[0]
    assert rep.to_dict()["n_failed"] == 1
    with pytest.raises(ValueError):
        run_scenario(SMALL, spec, 1, 1, fitter=exact_fitter)


def test_arm_specs(spec):
    std = arm_spec(spec, "standard").priors.parametric
    assert np.allclose(std.beta_cov, np.eye(2))
    assert std.nu_shape / std.nu_rate == pytest.approx(1.0)
    assert std.nu_shape / std.nu_rate**2 == pytest.approx(0.5)
    vague = arm_spec(spec, "vague").priors.parametric
    assert np.allclose(vague.beta_cov, 9 * np.eye(2))
    assert vague.nu_shape / vague.nu_rate**2 == pytest.approx(2.0)
    mis = arm_spec(spec, "misspecified").priors
    term = mis.processes[0]
    assert term.precision == 0.01
    assert term.mean_chf.family == "exponential" and term.mean_chf.scale == 13.0
    assert [p.mean_chf.scale for p in mis.processes[1:]] == [10.0, 11.0, 12.0]
    assert np.allclose(mis.parametric.beta_cov, std.beta_cov)
    with pytest.raises(ValueError):
        arm_spec(spec, "bogus")


def test_sensitivity_suite_and_table(spec):
    reports = sensitivity_suite(SMALL, spec, 2, 5, arms=("standard", "weak"), fitter=noisy_fitter)
    assert set(reports) == {"standard", "weak"}
    assert reports["weak"].label == "weak"
    rows = table_rows(list(reports.values())[:1])
    assert len(rows) == len(NAMES)
    assert set(rows[0]) == {"Parameter", "n", "Bias (nu=4)", "SD (nu=4)", "RMSE (nu=4)",
                            "CP (nu=4)"}


def test_default_survival_times():
    assert DEFAULT_SURVIVAL_TIMES[0] == 0.1 and DEFAULT_SURVIVAL_TIMES[-1] == 3.0
    assert len(DEFAULT_SURVIVAL_TIMES) == 30


def test_real_fitter_smoke(spec):
    rep = run_scenario(Scenario(n=20), spec, 2, 9)
    assert rep.n_failed == 0
    assert rep.survival_rmse.shape == (4, 30)
    assert np.all(np.isfinite(rep.rmse))
