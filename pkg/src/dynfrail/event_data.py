"""Observed multitype recurrent-event data on a calendar-time scale.

Process indices follow one convention everywhere in the package: process 0 is
the terminal event and processes 1..Q are the recurrent event types.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when subject or dataset contents violate the data model."""


@dataclass(frozen=True, eq=False)
class Subject:
    """One subject's follow-up record.

    Parameters
    ----------
    id : hashable
        Opaque identifier.
    covariates : array_like, shape (p,)
        Baseline covariate vector.
    followup_end : float
        Administrative censoring time.
    terminal_time : float or None
        Observed terminal event time, ``None`` if censored.
    recurrent_times : sequence of array_like
        One strictly increasing array of event times per recurrent type.
    """

    id: Hashable
    covariates: np.ndarray
    followup_end: float
    terminal_time: float | None
    recurrent_times: tuple[np.ndarray, ...]

    def __post_init__(self):
        cov = np.atleast_1d(np.asarray(self.covariates, dtype=float))
        if cov.ndim != 1:
            raise DataError(f"subject {self.id!r}: covariates must be a vector")
        rec = tuple(np.asarray(r, dtype=float).reshape(-1) for r in self.recurrent_times)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "recurrent_times", rec)
        object.__setattr__(self, "followup_end", float(self.followup_end))
        if self.terminal_time is not None:
            object.__setattr__(self, "terminal_time", float(self.terminal_time))

        if not np.isfinite(self.followup_end) or self.followup_end < 0:
            raise DataError(f"subject {self.id!r}: followup_end must be finite and >= 0")
        if self.terminal_time is not None:
            if not 0 < self.terminal_time <= self.followup_end:
                raise DataError(
                    f"subject {self.id!r}: terminal_time {self.terminal_time} "
                    f"outside (0, followup_end={self.followup_end}]"
                )
        end = self.exit_time
        for q, times in enumerate(rec, start=1):
            if times.size == 0:
                continue
            if not np.all(np.isfinite(times)) or times[0] <= 0:
                raise DataError(f"subject {self.id!r}: type-{q} times must be finite and > 0")
            if np.any(np.diff(times) <= 0):
                raise DataError(f"subject {self.id!r}: type-{q} times not strictly increasing")
            if times[-1] > end:
                raise DataError(
                    f"subject {self.id!r}: type-{q} event at {times[-1]} after exit time {end}"
                )

    @property
    def exit_time(self) -> float:
        """min(followup_end, terminal_time)."""
        if self.terminal_time is None:
            return self.followup_end
        return min(self.followup_end, self.terminal_time)

    @property
    def n_types(self) -> int:
        return len(self.recurrent_times)

    @property
    def terminal_indicator(self) -> int:
        return int(self.terminal_time is not None)

    @property
    def event_counts(self) -> np.ndarray:
        """Recurrent event counts K_q, q = 1..Q."""
        return np.array([len(r) for r in self.recurrent_times], dtype=int)

    def process_times(self, process: int) -> np.ndarray:
        """Event times of one process (0 = terminal)."""
        if not 0 <= process <= self.n_types:
            raise IndexError(f"process index {process} outside 0..{self.n_types}")
        if process == 0:
            if self.terminal_time is None:
                return np.empty(0)
            return np.array([self.terminal_time])
        return self.recurrent_times[process - 1]


@dataclass(frozen=True)
class TimeGrid:
    """Pooled ordered distinct event times t_(1) < ... < t_(M), with t_(0) = 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if t.size and (t[0] <= 0 or np.any(np.diff(t) <= 0)):
            raise DataError("grid times must be positive and strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    def time(self, j: int) -> float:
        """t_(j) for j in 0..M."""
        if not 0 <= j <= len(self):
            raise IndexError(f"grid index {j} outside 0..{len(self)}")
        return 0.0 if j == 0 else float(self.times[j - 1])

    def count_le(self, t) -> np.ndarray | int:
        """Number of grid times <= t."""
        return np.searchsorted(self.times, t, side="right")


@dataclass(frozen=True, eq=False)
class Dataset:
    subjects: tuple[Subject, ...]
    n_types: int
    n_covariates: int
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        if self.n_types < 1:
            raise DataError("n_types must be >= 1")
        ids = set()
        for s in subjects:
            if s.n_types != self.n_types:
                raise DataError(f"subject {s.id!r} has {s.n_types} recurrent types, expected {self.n_types}")
            if s.covariates.size != self.n_covariates:
                raise DataError(f"subject {s.id!r} has {s.covariates.size} covariates, expected {self.n_covariates}")
            if s.id in ids:
                raise DataError(f"duplicate subject id {s.id!r}")
            ids.add(s.id)
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(self.n_covariates))
        if len(names) != self.n_covariates:
            raise DataError("covariate_names length does not match n_covariates")
        object.__setattr__(self, "covariate_names", names)

    def __len__(self) -> int:
        return len(self.subjects)

    @cached_property
    def covariate_matrix(self) -> np.ndarray:
        if not self.subjects:
            return np.zeros((0, self.n_covariates))
        return np.vstack([s.covariates for s in self.subjects]).reshape(len(self), self.n_covariates)

    @cached_property
    def grid(self) -> TimeGrid:
        return build_time_grid(self)

    @cached_property
    def design(self) -> "CountingDesign":
        return CountingDesign(self)


def build_time_grid(dataset: Dataset) -> TimeGrid:
    """Sorted distinct union of every recurrent and terminal event time.

    Censoring times never enter the grid.
    """
    pieces = [np.empty(0)]
    for s in dataset.subjects:
        pieces.extend(s.recurrent_times)
        if s.terminal_time is not None:
            pieces.append(np.array([s.terminal_time]))
    return TimeGrid(np.unique(np.concatenate(pieces)))


def counting_increment(subject: Subject, process: int, grid: TimeGrid, j: int) -> int:
    """Number of ``process`` events of ``subject`` at exactly t_(j), 1 <= j <= M."""
    if not 1 <= j <= len(grid):
        raise IndexError(f"grid index {j} outside 1..{len(grid)}")
    times = subject.process_times(process)
    return int(np.count_nonzero(times == grid.times[j - 1]))


def at_risk(subject: Subject, t: float) -> int:
    """Y(t) = 1{min(followup_end, terminal_time) >= t}."""
    return int(subject.exit_time >= t)


def history_vector(subject: Subject, t: float) -> np.ndarray:
    """Counts of each recurrent type strictly before ``t``."""
    return np.array(
        [np.searchsorted(r, t, side="left") for r in subject.recurrent_times], dtype=int
    )


class CountingDesign:
    """Flattened counting-process bookkeeping for vectorized likelihood work.

    Each subject's at-risk period (0, exit] is cut at its own recurrent event
    times into segments on which the history vector is constant. A segment
    covers grid indices ``lo <= j < hi`` (0-based), i.e. grid times in
    (start, end]. Every subject owns at least one (possibly empty) segment and
    segments are stored contiguously per subject, starting at ``seg_offsets``.

    For every process the observed events are listed with their subject,
    0-based grid index and history vector just before the event.
    """

    def __init__(self, dataset: Dataset):
        grid = dataset.grid
        self.n = len(dataset)
        self.n_types = dataset.n_types
        self.n_processes = dataset.n_types + 1
        self.n_covariates = dataset.n_covariates
        self.times = grid.times
        self.M = len(grid)
        self.X = dataset.covariate_matrix
        self.exit = np.array([s.exit_time for s in dataset.subjects])

        Q = self.n_types
        seg_subject, seg_lo, seg_hi, seg_hist, offsets = [], [], [], [], []
        ev_subject = [[] for _ in range(Q + 1)]
        ev_time = [[] for _ in range(Q + 1)]
        ev_hist = [[] for _ in range(Q + 1)]

        for i, s in enumerate(dataset.subjects):
            offsets.append(len(seg_subject))
            counts = np.zeros(Q, dtype=int)
            if any(r.size for r in s.recurrent_times):
                all_t = np.concatenate(s.recurrent_times)
                all_q = np.concatenate([np.full(r.size, q) for q, r in enumerate(s.recurrent_times)])
                order = np.argsort(all_t, kind="stable")
                all_t, all_q = all_t[order], all_q[order]
            else:
                all_t = np.empty(0)
                all_q = np.empty(0, dtype=int)
            start = 0.0
            k = 0
            while k < all_t.size:
                b = all_t[k]
                seg_subject.append(i)
                seg_lo.append(start)
                seg_hi.append(b)
                seg_hist.append(counts.copy())
                while k < all_t.size and all_t[k] == b:
                    q = all_q[k]
                    ev_subject[q + 1].append(i)
                    ev_time[q + 1].append(b)
                    ev_hist[q + 1].append(counts.copy())
                    k += 1
                # counts advance only after every tie at b is recorded
                for q in all_q[(all_t == b)]:
                    counts[q] += 1
                start = b
            seg_subject.append(i)
            seg_lo.append(start)
            seg_hi.append(s.exit_time)
            seg_hist.append(counts.copy())
            if s.terminal_time is not None:
                ev_subject[0].append(i)
                ev_time[0].append(s.terminal_time)
                # recurrent events tied with the terminal time are not "before" it
                ev_hist[0].append(np.array([np.sum(r < s.terminal_time)
                                            for r in s.recurrent_times]))

        self.seg_subject = np.asarray(seg_subject, dtype=np.intp)
        self.seg_lo = np.searchsorted(self.times, np.asarray(seg_lo, dtype=float), side="right")
        self.seg_hi = np.searchsorted(self.times, np.asarray(seg_hi, dtype=float), side="right")
        self.seg_hist = np.asarray(seg_hist, dtype=float).reshape(-1, Q)
        self.seg_offsets = np.asarray(offsets, dtype=np.intp)
        self.G = self.seg_subject.size

        self.ev_subject = [np.asarray(e, dtype=np.intp) for e in ev_subject]
        self.ev_index = [
            np.searchsorted(self.times, np.asarray(t, dtype=float), side="left") for t in ev_time
        ]
        self.ev_hist = [np.asarray(h, dtype=float).reshape(-1, Q) for h in ev_hist]

        P = self.n_processes
        # per-subject and per-grid event counts
        self.subject_counts = np.zeros((P, self.n))
        self.grid_counts = np.zeros((P, self.M))
        self.covariate_event_sums = np.zeros((P, self.n_covariates))
        for p in range(P):
            np.add.at(self.subject_counts[p], self.ev_subject[p], 1.0)
            np.add.at(self.grid_counts[p], self.ev_index[p], 1.0)
            self.covariate_event_sums[p] = self.subject_counts[p] @ self.X
        self.total_counts = self.subject_counts.sum(axis=0)

    def per_subject_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum segment-level values (last axis of length G) per subject."""
        if self.n == 0:
            return np.zeros(values.shape[:-1] + (0,))
        return np.add.reduceat(values, self.seg_offsets, axis=-1)

    def segment_increments(self, cum: np.ndarray) -> np.ndarray:
        """Cumulative-hazard mass on each segment.

        ``cum`` has last axis M + 1 with ``cum[..., 0] = 0``.
        """
        return cum[..., self.seg_hi] - cum[..., self.seg_lo]

    def spread_to_grid(self, weights: np.ndarray) -> np.ndarray:
        """Sum segment weights over every grid point each segment covers.

        ``weights`` has shape (B, G); the result has shape (B, M).
        """
        weights = np.atleast_2d(weights)
        B = weights.shape[0]
        M1 = self.M + 1
        base = (np.arange(B) * M1)[:, None]
        size = B * M1
        diff = np.bincount((base + self.seg_lo).ravel(), weights.ravel(), size)
        diff -= np.bincount((base + self.seg_hi).ravel(), weights.ravel(), size)
        return np.cumsum(diff.reshape(B, M1), axis=1)[:, : self.M]


def make_subject(id, covariates: Sequence[float], followup_end: float,
                 terminal_time: float | None = None,
                 recurrent_times: Sequence[Sequence[float]] = ()) -> Subject:
    """Convenience constructor accepting plain lists."""
    return Subject(id, np.asarray(covariates, dtype=float), followup_end, terminal_time,
                   tuple(np.asarray(r, dtype=float) for r in recurrent_times))
