from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynfrail.dynamic_effects import DynamicCoeffs, rho

counts = st.lists(st.integers(0, 50), min_size=3, max_size=3)
coeffs = st.lists(st.floats(0, 5), min_size=3, max_size=3)


def test_empty_history_gives_one():
    assert rho([0, 0, 0], [0.35, 0.30, 0.25]) == 1.0


def test_zero_coefficients_give_one():
    assert rho([4, 2, 9], [0.0, 0.0, 0.0]) == 1.0


def test_hand_example():
    assert rho([2, 1, 0], [0.35, 0.30, 0.25]) == pytest.approx(2.0, abs=1e-14)


def test_errors():
    with pytest.raises(ValueError):
        rho([1, 2], [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        rho([1, 2, 3], [0.1, -0.2, 0.3])
    with pytest.raises(ValueError):
        DynamicCoeffs([-1.0])
    with pytest.raises(ValueError):
        rho([1, 2, 3], [0.1, 0.2, 0.3], form="exponential")


@given(counts, counts, coeffs)
def test_additive_in_history(h1, h2, c):
    lhs = rho(np.add(h1, h2), c) - 1.0
    rhs = (rho(h1, c) - 1.0) + (rho(h2, c) - 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(counts, coeffs, st.integers(0, 2), st.integers(1, 5))
def test_monotone_in_history(h, c, k, bump):
    h2 = list(h)
    h2[k] += bump
    assert rho(h2, c) >= rho(h, c) >= 1.0
