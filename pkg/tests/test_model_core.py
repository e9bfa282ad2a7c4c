from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynfrail.event_data import Dataset, make_subject
from dynfrail.model_core import (HazardIncrements, ModelParams, exposures, intensity_factor,
                                 log_likelihood)
from oracles import naive_log_likelihood, random_dataset


def random_params(rng, data, zero_dynamic=False):
    Q, p, M = data.n_types, data.n_covariates, data.design.M
    inc = rng.gamma(1.0, 0.3, size=(Q + 1, M))
    beta = rng.normal(scale=0.5, size=(Q + 1, p))
    alpha = np.zeros((Q, Q)) if zero_dynamic else rng.uniform(0, 0.8, size=(Q, Q))
    gamma = np.zeros(Q) if zero_dynamic else rng.uniform(0, 0.8, size=Q)
    W = rng.gamma(2.0, 0.5, size=len(data))
    return ModelParams(inc, beta, alpha, gamma, 2.0, W)


def oracle(data, params, unit_rho=False):
    return naive_log_likelihood(data, params.increments.values.tolist(), params.beta.tolist(),
                                params.alpha.tolist(), params.gamma.tolist(),
                                params.frailties.tolist(), unit_rho)


def one_type(*subjects, p=0):
    return Dataset(tuple(subjects), 1, p)


def test_intensity_factor_examples():
    data = Dataset((make_subject(1, [1.0], 3.0, None, [[1.0, 2.0]]),
                    make_subject(2, [0.0], 1.5, None, [[]])), 1, 1)
    inc = np.ones((2, 2))
    base = ModelParams(inc, np.zeros((2, 1)), np.zeros((1, 1)), np.zeros(1), 1.0, np.ones(2))
    assert intensity_factor(data, 0, 1, 1, base) == 1.0
    assert intensity_factor(data, 1, 1, 2, base) == 0.0
    scaled = ModelParams(inc, np.array([[0.0], [math.log(2.0)]]), np.array([[0.5]]), np.zeros(1),
                         1.0, np.array([2.0, 1.0]))
    # t_(2) = 2.0 has one prior type-1 event, so rho = 1.5
    assert intensity_factor(data, 0, 1, 2, scaled) == pytest.approx(6.0, rel=1e-14)
    with pytest.raises(IndexError):
        intensity_factor(data, 0, 3, 1, base)


def test_exposures_examples():
    data = one_type(make_subject(1, [], 3.0, None, [[1.0]]))
    zero = ModelParams.neutral(data, np.zeros((2, 1)))
    assert np.all(exposures(data, zero).r == 0)
    half = ModelParams.neutral(data, np.array([[0.0], [0.5]]))
    assert exposures(data, half).r[0, 1] == pytest.approx(0.5)
    two = one_type(make_subject(1, [], 3.0, None, [[1.0, 2.0]]))
    params = ModelParams(np.array([[0.0, 0.0], [0.5, 0.3]]), np.zeros((2, 0)), np.array([[0.35]]),
                         np.zeros(1), 1.0, np.ones(1))
    assert exposures(two, params).r[0, 1] == pytest.approx(0.905, abs=1e-14)


def test_log_likelihood_censoring_only():
    data = one_type(make_subject(1, [], 1.0, None, [[]]), make_subject(2, [], 2.0, None, [[]]))
    params = ModelParams.neutral(data, np.zeros((2, 0)))
    assert log_likelihood(data, params) == 0.0

    # add a grid point through an unrelated event to give nonzero exposure
    data = one_type(make_subject(1, [], 3.0, None, [[]]), make_subject(2, [], 3.0, 2.0, [[]]))
    inc = np.array([[0.0], [1.3]])
    params = ModelParams(inc, np.zeros((2, 0)), np.zeros((1, 1)), np.zeros(1), 1.0,
                         np.array([0.5, 0.5]))
    # terminal increment 0 at the terminal event -> -inf sentinel
    assert log_likelihood(data, params) == -math.inf
    params.increments = HazardIncrements(np.array([[1e-300], [1.3]]))
    expected = math.log(0.5 * 1e-300) - 0.5 * 1.3 * 2 - 2 * 0.5 * 1e-300
    assert log_likelihood(data, params) == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_single_event_hand_value():
    data = one_type(make_subject(1, [], 3.0, None, [[1.0]]))
    params = ModelParams.neutral(data, np.array([[0.0], [0.5]]))
    assert log_likelihood(data, params) == pytest.approx(math.log(0.5) - 0.5, abs=1e-12)
    assert log_likelihood(data, params) == pytest.approx(-1.19315, abs=1e-5)


def test_doubling_frailty_doubles_exposure():
    data = one_type(make_subject(1, [], 3.0, None, [[1.0]]), make_subject(2, [], 3.0, None, [[]]))
    inc = np.array([[0.2], [0.5]])
    p1 = ModelParams.neutral(data, inc)
    p2 = ModelParams(inc, np.zeros((2, 0)), np.zeros((1, 1)), np.zeros(1), 1.0, np.array([1.0, 2.0]))
    gap = log_likelihood(data, p1) - log_likelihood(data, p2)
    assert gap == pytest.approx(0.7, abs=1e-14)


@given(st.integers(0, 2**32 - 1), st.sampled_from([None, 0.25]))
def test_matches_naive_oracle(seed, tie):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, int(rng.integers(1, 6)), 3, 2, tie_grid=tie)
    if data.design.M == 0:
        return
    params = random_params(rng, data)
    assert log_likelihood(data, params) == pytest.approx(oracle(data, params), rel=1e-10, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_reduces_to_shared_frailty_ph(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 4, 2, 1)
    if data.design.M == 0:
        return
    params = random_params(rng, data, zero_dynamic=True)
    assert log_likelihood(data, params) == pytest.approx(oracle(data, params, unit_rho=True),
                                                         rel=1e-10, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_additive_over_subjects_and_processes(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 4, 2, 1)
    if data.design.M == 0:
        return
    params = random_params(rng, data)
    total = log_likelihood(data, params)
    if total == -math.inf:
        return
    args = (data, params.increments.values.tolist(), params.beta.tolist(), params.alpha.tolist(),
            params.gamma.tolist(), params.frailties.tolist())
    by_subject = sum(naive_log_likelihood(*args, subjects=[i]) for i in range(len(data)))
    by_process = sum(naive_log_likelihood(*args, processes=[p]) for p in range(3))
    assert total == pytest.approx(by_subject, rel=1e-10, abs=1e-10)
    assert total == pytest.approx(by_process, rel=1e-10, abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_exposure_linearity(seed, scale):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 4, 2, 2)
    if data.design.M == 0:
        return
    params = random_params(rng, data)
    r = exposures(data, params).r
    scaled = ModelParams(params.increments.values * scale, params.beta, params.alpha,
                         params.gamma, params.nu, params.frailties)
    np.testing.assert_allclose(exposures(data, scaled).r, scale * r, rtol=1e-12, atol=1e-15)
    shift = rng.normal(size=data.n_covariates)
    moved = ModelParams(params.increments, params.beta + shift, params.alpha, params.gamma,
                        params.nu, params.frailties)
    factor = np.exp(data.covariate_matrix @ shift)[:, None]
    np.testing.assert_allclose(exposures(data, moved).r, factor * r, rtol=1e-12, atol=1e-15)
