from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynfrail.event_data import (DataError, Dataset, at_risk, build_time_grid, counting_increment,
                                 history_vector, make_subject)
from oracles import naive_grid, naive_history, random_dataset


def dataset(*subjects, n_types=1):
    return Dataset(tuple(subjects), n_types, 0)


def test_grid_deduplicates_union():
    a = make_subject("A", [], 3.0, None, [[1.0, 2.0]])
    b = make_subject("B", [], 3.0, 2.0, [[]])
    assert tuple(build_time_grid(dataset(a, b)).times) == (1.0, 2.0)


def test_grid_empty_without_events():
    a = make_subject("A", [], 3.0, None, [[]])
    grid = build_time_grid(dataset(a))
    assert len(grid) == 0


def test_grid_three_subjects():
    subs = [make_subject(1, [], 3.0, None, [[0.5]]),
            make_subject(2, [], 3.0, None, [[0.5, 1.7]]),
            make_subject(3, [], 3.0, 2.9, [[]])]
    assert tuple(build_time_grid(dataset(*subs)).times) == (0.5, 1.7, 2.9)


def test_counting_increment_examples():
    subs = [make_subject(1, [], 3.0, None, [[0.5]]),
            make_subject(2, [], 3.0, None, [[0.5, 1.7]]),
            make_subject(3, [], 3.0, 2.9, [[]])]
    data = dataset(*subs)
    grid = data.grid
    assert counting_increment(subs[1], 1, grid, 2) == 1
    assert counting_increment(subs[2], 0, grid, 3) == 1
    assert counting_increment(subs[0], 1, grid, 2) == 0
    with pytest.raises(IndexError):
        counting_increment(subs[0], 2, grid, 1)
    with pytest.raises(IndexError):
        counting_increment(subs[0], 1, grid, 0)


def test_at_risk_boundaries():
    assert at_risk(make_subject(1, [], 3.0), 2.9) == 1
    term = make_subject(2, [], 3.0, 2.0)
    assert at_risk(term, 2.0) == 1
    assert at_risk(term, 2.1) == 0
    assert at_risk(make_subject(3, [], 1.5), 1.6) == 0


def test_history_left_limit():
    s = make_subject(1, [], 3.0, None, [[1.0, 2.0]])
    assert history_vector(s, 2.0)[0] == 1
    assert np.all(history_vector(s, 0.0) == 0)
    s3 = make_subject(2, [], 3.0, None, [[1.0], [0.5, 0.9], []])
    assert history_vector(s3, 1.5).tolist() == [1, 2, 0]


def test_subject_rejects_invalid_records():
    with pytest.raises(DataError):
        make_subject(1, [], 2.0, None, [[1.0, 2.5]])
    with pytest.raises(DataError):
        make_subject(1, [], 3.0, 1.0, [[1.5]])
    with pytest.raises(DataError):
        make_subject(1, [], 3.0, None, [[1.0, 1.0]])
    with pytest.raises(DataError):
        make_subject(1, [], 3.0, 3.5)


def test_dataset_shape_checks():
    a = make_subject(1, [0.0], 3.0, None, [[1.0]])
    with pytest.raises(DataError):
        Dataset((a,), 2, 1)
    with pytest.raises(DataError):
        Dataset((a,), 1, 2)
    with pytest.raises(DataError):
        Dataset((a, make_subject(1, [0.0], 2.0, None, [[]])), 1, 1)


def test_derived_counts():
    s = make_subject(1, [], 3.0, 2.5, [[0.5, 1.0], [2.0]])
    assert s.terminal_indicator == 1
    assert s.event_counts.tolist() == [2, 1]
    assert s.exit_time == 2.5


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 3),
       st.sampled_from([None, 0.25]))
def test_grid_and_counting_invariants(seed, n, Q, tie):
    data = random_dataset(np.random.default_rng(seed), n, Q, 1, tie_grid=tie)
    grid = data.grid
    assert list(grid.times) == naive_grid(data)
    total = sum(int(s.event_counts.sum()) + s.terminal_indicator for s in data.subjects)
    assert len(grid) <= total
    for s in data.subjects:
        for p in range(Q + 1):
            counts = sum(counting_increment(s, p, grid, j) for j in range(1, len(grid) + 1))
            expected = s.terminal_indicator if p == 0 else s.event_counts[p - 1]
            assert counts == expected


@given(st.integers(0, 2**32 - 1), st.lists(st.floats(0, 4), min_size=2, max_size=8))
def test_at_risk_and_history_monotone(seed, ts):
    data = random_dataset(np.random.default_rng(seed), 3, 2, 0)
    ts = sorted(ts)
    for s in data.subjects:
        risk = [at_risk(s, t) for t in ts]
        assert all(a >= b for a, b in zip(risk, risk[1:]))
        hist = np.array([history_vector(s, t) for t in ts])
        assert np.all(np.diff(hist, axis=0) >= 0)
        for t in ts:
            assert history_vector(s, t).tolist() == naive_history(s, t)


def test_design_matches_definitions(rng):
    data = random_dataset(rng, 8, 3, 2, tie_grid=0.2)
    d = data.design
    assert d.M == len(data.grid)
    for p in range(4):
        expected = [sum(counting_increment(s, p, data.grid, j) for s in data.subjects)
                    for j in range(1, d.M + 1)]
        assert d.grid_counts[p].tolist() == expected
