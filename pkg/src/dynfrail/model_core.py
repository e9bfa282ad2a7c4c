"""Intensities, exposure sums and the discrete counting-process likelihood."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamic_effects import DynamicCoeffs, rho
from .event_data import CountingDesign, Dataset, at_risk, history_vector


@dataclass(frozen=True)
class HazardIncrements:
    """Baseline cumulative-hazard increments on the pooled grid.

    ``values[p, j]`` is the increment of process ``p`` (0 = terminal) over
    (t_(j), t_(j+1)] in 0-based grid indexing.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ValueError("hazard increments must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def n_processes(self) -> int:
        return self.values.shape[0]

    def cumulative(self, grid_times: np.ndarray, t, process: int):
        """Step-function cumulative hazard of one process at ``t``."""
        k = np.searchsorted(grid_times, t, side="right")
        cum = np.concatenate([[0.0], np.cumsum(self.values[process])])
        return cum[k]


@dataclass
class ModelParams:
    """Every unknown of the joint model.

    ``beta`` has one row per process (row 0 terminal), ``alpha[q - 1]`` holds
    the coefficients of recurrent type q and ``gamma`` those of the terminal
    process.
    """

    increments: HazardIncrements
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    nu: float
    frailties: np.ndarray

    def __post_init__(self):
        if not isinstance(self.increments, HazardIncrements):
            self.increments = HazardIncrements(self.increments)
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.gamma = np.asarray(DynamicCoeffs(self.gamma))
        DynamicCoeffs(self.alpha.ravel())
        self.frailties = np.asarray(self.frailties, dtype=float).reshape(-1)
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if np.any(self.frailties <= 0):
            raise ValueError("frailties must be positive")
        Q = self.gamma.size
        if self.alpha.shape != (Q, Q):
            raise ValueError(f"alpha must have shape ({Q}, {Q})")
        if self.beta.shape[0] != Q + 1 or self.increments.n_processes != Q + 1:
            raise ValueError("beta and increments need one row per process")

    def coeffs(self, process: int) -> np.ndarray:
        return self.gamma if process == 0 else self.alpha[process - 1]

    def coeff_matrix(self) -> np.ndarray:
        """Dynamic coefficients stacked per process, shape (Q + 1, Q)."""
        return np.vstack([self.gamma[None, :], self.alpha])

    @classmethod
    def neutral(cls, dataset: Dataset, increments) -> "ModelParams":
        """Unit frailties, zero regression and dynamic effects."""
        Q, p = dataset.n_types, dataset.n_covariates
        return cls(increments, np.zeros((Q + 1, p)), np.zeros((Q, Q)), np.zeros(Q), 1.0,
                   np.ones(len(dataset)))


@dataclass(frozen=True)
class ExposureCache:
    """r[i, p]: subject exposure of process p, excluding the frailty."""

    r: np.ndarray

    @property
    def recurrent_total(self) -> np.ndarray:
        return self.r[:, 1:].sum(axis=1)

    @property
    def total(self) -> np.ndarray:
        return self.r.sum(axis=1)


def intensity_factor(dataset: Dataset, i: int, process: int, j: int,
                     params: ModelParams) -> float:
    """Multiplier of the baseline increment of subject ``i`` at grid time t_(j):
    W_i exp(beta_p'X_i) Y_i(t_(j)) rho_p(N_i(t_(j)-)).

    ``j`` runs over 1..M as in the grid's own indexing.
    """
    if not 0 <= process < params.beta.shape[0]:
        raise IndexError(f"process index {process} out of range")
    if j == 0:
        raise IndexError("grid index must be >= 1")
    subject = dataset.subjects[i]
    t = dataset.grid.time(j)
    if not at_risk(subject, t):
        return 0.0
    lin = float(params.beta[process] @ subject.covariates)
    return float(params.frailties[i] * np.exp(lin)
                 * rho(history_vector(subject, t), params.coeffs(process)))


# -- vectorized building blocks shared with the sampler ----------------------

def cumulative_with_origin(increments: np.ndarray) -> np.ndarray:
    """Prefix sums with a leading zero along the last axis."""
    inc = np.asarray(increments, dtype=float)
    out = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def subject_masses(design: CountingDesign, increments: np.ndarray):
    """Per-subject at-risk hazard mass.

    Returns ``(S, A)`` with ``S[..., p, i] = sum_j Y_ij Lambda_p(j)`` and
    ``A[..., p, l, i] = sum_j Y_ij N_il(t_j-) Lambda_p(j)``, so that the
    dynamic-weighted sum for coefficients ``c`` is ``S + c . A``.
    """
    dL = design.segment_increments(cumulative_with_origin(increments))
    S = design.per_subject_sum(dL)
    A = design.per_subject_sum(dL[..., None, :] * design.seg_hist.T)
    return S, A


def base_exposure(S: np.ndarray, A: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """sum_j Y rho Lambda per subject, from the masses of :func:`subject_masses`."""
    return S + np.einsum("...pqn,...pq->...pn", A, coeffs)


def exposures(dataset: Dataset, params: ModelParams) -> ExposureCache:
    """r_pi = exp(beta_p'X_i) sum_j Y_i(t_j) rho_p(N_i(t_j-)) Lambda_p(j)."""
    design = dataset.design
    S, A = subject_masses(design, params.increments.values)
    base = base_exposure(S, A, params.coeff_matrix())
    lin = params.beta @ design.X.T
    return ExposureCache(np.ascontiguousarray((np.exp(lin) * base).T))


def event_log_terms(design: CountingDesign, process: int, increments: np.ndarray,
                    coeffs: np.ndarray) -> np.ndarray:
    """log[rho Lambda] at every observed event of ``process``; -inf where zero."""
    idx = design.ev_index[process]
    vals = (1.0 + design.ev_hist[process] @ coeffs) * increments[idx]
    with np.errstate(divide="ignore"):
        return np.log(vals)


def log_likelihood(dataset: Dataset, params: ModelParams) -> float:
    """Log of the discrete likelihood given the frailties.

    An observed event with a zero baseline increment (or outside the risk
    set) makes the likelihood zero; ``-inf`` is returned rather than raising.
    """
    design = dataset.design
    W = params.frailties
    if W.size != design.n:
        raise ValueError("frailty vector length does not match the number of subjects")
    inc = params.increments.values
    cmat = params.coeff_matrix()
    S, A = subject_masses(design, inc)
    base = base_exposure(S, A, cmat)
    lin = params.beta @ design.X.T
    logW = np.log(W)
    total = 0.0
    for p in range(design.n_processes):
        subj = design.ev_subject[p]
        if subj.size:
            if np.any(design.exit[subj] < design.times[design.ev_index[p]]):
                return -np.inf
            logs = event_log_terms(design, p, inc[p], cmat[p])
            if np.any(np.isneginf(logs)):
                return -np.inf
            total += logs.sum() + logW[subj].sum() + lin[p, subj].sum()
        total -= np.dot(W, np.exp(lin[p]) * base[p])
    return float(total)
