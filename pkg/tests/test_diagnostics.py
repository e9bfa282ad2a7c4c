from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dynfrail.diagnostics import (convergence_table, effective_sample_size, equal_tailed_interval,
                                  gelman_rubin, marginal_survival, summarize, survival_from_chf)
from dynfrail.mcmc import PosteriorDraws


def naive_split_rhat(chains):
    halves = []
    for c in chains:
        h = len(c) // 2
        halves += [list(c[:h]), list(c[len(c) - h:])]
    n = len(halves[0])
    means = [sum(h) / n for h in halves]
    grand = sum(means) / len(means)
    B = n * sum((m - grand) ** 2 for m in means) / (len(means) - 1)
    W = sum(sum((v - m) ** 2 for v in h) / (n - 1) for h, m in zip(halves, means)) / len(halves)
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def ar1(rng, phi, m, n):
    x = np.empty((m, n))
    x[:, 0] = rng.standard_normal(m) / math.sqrt(1 - phi**2)
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + rng.standard_normal(m)
    return x


def test_rhat_hand_example():
    assert gelman_rubin([[1, 2, 3, 4], [2, 3, 4, 5]]) == pytest.approx(1.957890, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(4, 40))
def test_rhat_matches_naive(seed, m, n):
    x = np.random.default_rng(seed).normal(size=(m, n))
    assert gelman_rubin(x) == pytest.approx(naive_split_rhat(x.tolist()), rel=1e-10)
    assert gelman_rubin(x[::-1]) == pytest.approx(gelman_rubin(x), rel=1e-12)


def test_rhat_near_one_for_iid_and_large_for_shifted(rng):
    x = rng.normal(size=(4, 1000))
    assert gelman_rubin(x) < 1.01
    x[0] += 3
    assert gelman_rubin(x) > 1.2


def test_rhat_input_checks():
    with pytest.raises(ValueError):
        gelman_rubin([[1, 2, 3, 4]])
    with pytest.raises(ValueError):
        gelman_rubin([[1, 2], [3, 4]])
    with pytest.warns(RuntimeWarning):
        assert math.isnan(gelman_rubin(np.ones((2, 10))))


def test_ess_iid_and_ar1(rng):
    iid = rng.normal(size=(4, 2000))
    assert effective_sample_size(iid) == pytest.approx(8000, rel=0.1)
    x = ar1(rng, 0.5, 4, 5000)
    assert effective_sample_size(x) == pytest.approx(20000 / 3, rel=0.1)
    x = ar1(rng, 0.9, 4, 5000)
    assert effective_sample_size(x) == pytest.approx(20000 * 0.1 / 1.9, rel=0.15)


def test_ess_cap_and_constant(rng):
    anti = np.tile([1.0, -1.0], (2, 50)) + 1e-3 * rng.normal(size=(2, 100))
    assert effective_sample_size(anti) > 200
    assert effective_sample_size(anti, cap=True) == 200
    with pytest.warns(RuntimeWarning):
        assert effective_sample_size(np.ones((2, 20))) == 0.0
    with pytest.raises(ValueError):
        effective_sample_size(np.ones((2, 5)))


def test_summarize_examples():
    rows = summarize({"beta_11": np.array([0.1, 0.2, 0.3]), "nu": np.array([2.0, 2.0])})
    b, nu = rows
    assert b.mean == pytest.approx(0.2)
    assert b.std_error == pytest.approx(0.1)
    assert b.hazard_ratio == pytest.approx(math.exp(0.2))
    assert b.lower <= b.mean <= b.upper
    assert nu.hazard_ratio is None and nu.std_error == 0.0
    assert equal_tailed_interval(np.arange(101.0)) == (pytest.approx(2.5), pytest.approx(97.5))
    with pytest.raises(ValueError):
        summarize({"nu": np.array([])})


@given(arrays(float, st.integers(2, 50), elements=st.floats(-100, 100)), st.integers(0, 1000))
def test_summary_permutation_invariant(x, seed):
    y = np.random.default_rng(seed).permutation(x)
    a, b = summarize({"nu": x})[0], summarize({"nu": y})[0]
    assert a.mean == pytest.approx(b.mean, abs=1e-9)
    assert a.lower == pytest.approx(b.lower, abs=1e-9)
    assert a.upper == pytest.approx(b.upper, abs=1e-9)
    assert a.lower <= a.mean <= a.upper


def test_survival_examples():
    assert survival_from_chf(0.0, 2.0) == 1.0
    assert survival_from_chf(1.0, 2.0) == pytest.approx(4 / 9)
    assert survival_from_chf(1.0, marginal=False) == pytest.approx(math.exp(-1))
    assert survival_from_chf(1.0, 2.0, math.log(2.0)) == pytest.approx(0.25)
    # huge precision recovers the conditional form
    assert survival_from_chf(1.0, 1e9) == pytest.approx(math.exp(-1), rel=1e-6)


@given(arrays(float, 10, elements=st.floats(0, 5)), st.floats(0.05, 50), st.floats(-2, 2))
def test_survival_monotone_bounded(incs, nu, eta):
    chf = np.cumsum(incs)
    S = survival_from_chf(chf, nu, eta)
    C = survival_from_chf(chf, nu, eta, marginal=False)
    assert np.all((S >= 0) & (S <= 1))
    assert np.all(np.diff(S) <= 1e-15)
    # Jensen: the frailty-marginal curve lies above the conditional one at W = 1
    assert np.all(S >= C - 1e-15)


def test_marginal_survival_band(rng):
    chf = np.cumsum(rng.gamma(1, 0.1, (200, 15)), axis=1)
    nu = rng.gamma(20, 0.1, 200)
    curve = marginal_survival(chf, nu, times=np.linspace(0.1, 1.5, 15))
    assert np.all(curve.lower <= curve.mean + 1e-12)
    assert np.all(curve.mean <= curve.upper + 1e-12)
    assert set(curve.to_dict()) == {"time", "mean", "lo", "hi"}
    beta = np.zeros((200, 2))
    same = marginal_survival(chf, nu, [1.0, 2.0], None, beta)
    np.testing.assert_allclose(same.mean, curve.mean)


def test_convergence_table(rng):
    values = rng.normal(size=(4, 300, 2))
    draws = PosteriorDraws(["beta_11", "nu"], values, np.zeros((4, 300, 2, 1)),
                           np.zeros((4, 300, 1)), np.zeros((4, 300)), np.arange(300),
                           np.array([1.0]), 1, 1, ["x"], {})
    rows = convergence_table(draws)
    assert [r["parameter"] for r in rows] == ["beta_11", "nu"]
    for r in rows:
        assert r["rhat"] <= 1.02
        assert 0 < r["ess_pct"] <= 100
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        single = PosteriorDraws(["nu"], values[:1, :, 1:], np.zeros((1, 300, 2, 1)),
                                np.zeros((1, 300, 1)), np.zeros((1, 300)), np.arange(300),
                                np.array([1.0]), 1, 1, ["x"], {})
        assert math.isnan(convergence_table(single)[0]["rhat"])
