"""Non-conjugate updates: random-walk MH for nu and differential-evolution MCMC
for the regression and dynamic-effect blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .event_data import Dataset
from .model_core import ModelParams, base_exposure, subject_masses
from .priors import ParametricPriors


# -- nu ---------------------------------------------------------------------

def log_kernel_nu(nu, event_totals, exposure_totals, priors: ParametricPriors | None = None):
    """Log conditional kernel of nu with the frailties integrated out.

    sum_i [lgamma(N_i + nu) - (N_i + nu) log(r_i + nu)] + n [nu log nu - lgamma(nu)]
    plus the gamma prior kernel. ``nu`` may be an array of shape (K,) paired
    with ``exposure_totals`` of shape (K, n).
    """
    nu = np.asarray(nu, dtype=float)
    N = np.asarray(event_totals, dtype=float)
    r = np.asarray(exposure_totals, dtype=float)
    n = N.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        nu_b = nu[..., None]
        val = np.sum(gammaln(N + nu_b) - (N + nu_b) * np.log(r + nu_b), axis=-1)
        val = val + n * (nu * np.log(nu) - gammaln(nu))
        if priors is not None:
            val = val + (priors.nu_shape - 1.0) * np.log(nu) - priors.nu_rate * nu
    val = np.where(nu > 0, val, -np.inf)
    return float(val) if val.ndim == 0 else val


@dataclass
class MhState:
    """Log-scale random-walk Metropolis state for a positive parameter."""

    value: float | np.ndarray
    scale: float = 0.3
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def mh_update_nu(state: MhState, kernel: Callable, rng: np.random.Generator) -> MhState:
    """One log-scale random-walk step nu' = nu exp(s z).

    The acceptance ratio includes the log-transform Jacobian nu'/nu. Works
    elementwise when ``state.value`` is an array of independent chains.
    """
    cur = np.asarray(state.value, dtype=float)
    z = rng.standard_normal(cur.shape)
    prop = cur * np.exp(state.scale * z)
    log_ratio = kernel(prop) - kernel(cur) + np.log(prop) - np.log(cur)
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    accept = np.log(rng.uniform(size=cur.shape)) < log_ratio
    new = np.where(accept, prop, cur)
    return MhState(
        value=float(new) if new.ndim == 0 else new,
        scale=state.scale,
        accepted=state.accepted + int(np.sum(accept)),
        proposed=state.proposed + int(accept.size),
    )


def adapt_scale(scale: float, rate: float, low: float = 0.25, high: float = 0.45) -> float:
    """Multiplicative burn-in adaptation toward an acceptance window."""
    if rate < low:
        return scale * 0.8
    if rate > high:
        return scale * 1.25
    return scale


# -- block kernels ----------------------------------------------------------

def beta_kernel(beta, covariate_event_sum, X, weights, base, prior_mean, prior_prec) -> float:
    """sum_i N_i beta'X_i - sum_i W_i exp(beta'X_i) B_i + Gaussian prior kernel.

    ``weights`` are frailties, ``base`` the per-subject sum_j Y rho Lambda.
    """
    lin = X @ beta
    d = beta - prior_mean
    return float(covariate_event_sum @ beta - weights @ (np.exp(lin) * base)
                 - 0.5 * d @ prior_prec @ d)


def dynamic_kernel(coeffs, ev_hist, ev_log_increment_sum, scaled_weights, S, A,
                   shape, rate, mask) -> float:
    """Log kernel of one dynamic-coefficient vector.

    sum_events log[rho Lambda] - sum_i W_i e^{beta'X_i} (S_i + c . A_i) + gamma prior
    kernels over the components in ``mask``; ``-inf`` if any free component <= 0.
    ``scaled_weights`` = W_i e^{beta'X_i}; ``A`` has shape (Q, n).
    """
    free = coeffs[mask]
    if np.any(free <= 0):
        return -np.inf
    rho_ev = 1.0 + ev_hist @ coeffs
    exposure = scaled_weights @ (S + coeffs @ A)
    return float(np.sum(np.log(rho_ev)) + ev_log_increment_sum - exposure
                 + np.sum((shape[mask] - 1.0) * np.log(free) - rate[mask] * free))


def log_kernel_block(block: str, value, dataset: Dataset, params: ModelParams,
                     priors: ParametricPriors, process: int | None = None,
                     mask: np.ndarray | None = None) -> float:
    """Log conditional kernel of a regression or dynamic block plus its log prior.

    ``block`` is ``"beta"`` (with ``process`` 0..Q), ``"alpha"`` (with
    ``process`` 1..Q) or ``"gamma"``. ``value`` replaces the block in
    ``params``; ``mask`` marks free dynamic components (all by default).
    """
    design = dataset.design
    inc = params.increments.values
    W = params.frailties
    if block == "beta":
        S, A = subject_masses(design, inc[process:process + 1])
        base = base_exposure(S, A, params.coeffs(process)[None, :])[0]
        beta = np.asarray(value, dtype=float)
        return beta_kernel(beta, design.covariate_event_sums[process], design.X, W, base,
                           priors.beta_mean[process], priors.beta_precision(process))
    if block in ("alpha", "gamma"):
        p = 0 if block == "gamma" else process
        if p is None or (block == "alpha" and p < 1):
            raise ValueError("alpha block needs a recurrent type 1..Q")
        c = np.asarray(value, dtype=float)
        if mask is None:
            mask = np.ones(c.size, dtype=bool)
        if np.any(c[~mask] != 0) or np.any(c < 0):
            return -np.inf
        S, A = subject_masses(design, inc[p:p + 1])
        with np.errstate(divide="ignore"):
            log_inc = float(np.sum(np.log(inc[p][design.ev_index[p]])))
        sw = W * np.exp(design.X @ params.beta[p])
        a, b = priors.dynamic_hyper(p)
        return dynamic_kernel(c, design.ev_hist[p], log_inc, sw, S[0], A[0], a, b, mask)
    raise ValueError(f"unknown block {block!r}")


# -- differential evolution -------------------------------------------------

def default_step(dim: int) -> float:
    return 2.38 / np.sqrt(2.0 * dim)


@dataclass
class DemcPopulation:
    """Population of block states updated by differential-evolution proposals.

    ``states`` has shape (n_members, dim). Every ``big_step_every``-th sweep
    uses a unit step to allow jumps between modes.
    """

    states: np.ndarray
    step: float | None = None
    jitter: float = 1e-4
    big_step_every: int = 10
    sweeps: int = 0
    accepted: np.ndarray = field(default=None)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float)).copy()
        K, d = self.states.shape
        if K < max(4, d + 1):
            raise ValueError(f"population needs at least max(4, dim + 1) = {max(4, d + 1)} members")
        if self.step is None:
            self.step = default_step(d)
        if not self.step > 0 or self.jitter < 0:
            raise ValueError("step must be > 0 and jitter >= 0")
        if self.accepted is None:
            self.accepted = np.zeros(K, dtype=int)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.sum() / (self.sweeps * self.size)) if self.sweeps else float("nan")


def demc_update(pop: DemcPopulation, kernel: Callable[[int, np.ndarray], float],
                rng: np.random.Generator) -> DemcPopulation:
    """One sequential sweep over the population.

    Member k proposes x_k + g (x_a - x_b) + e z with a, b distinct members
    other than k, accepted by Metropolis against ``kernel(k, x)``. Members
    are updated in place in index order, so later members see earlier moves.
    """
    K, d = pop.states.shape
    g = 1.0 if pop.big_step_every and (pop.sweeps + 1) % pop.big_step_every == 0 else pop.step
    # all randomness for the sweep is drawn up front
    a = rng.integers(0, K - 1, size=K)
    b = rng.integers(0, K - 2, size=K)
    b = b + (b >= a)
    idx = np.arange(K)
    a = a + (a >= idx)
    b = b + (b >= idx)
    z = rng.standard_normal((K, d))
    log_u = np.log(rng.uniform(size=K))
    for k in range(K):
        x = pop.states[k]
        prop = x + g * (pop.states[a[k]] - pop.states[b[k]]) + pop.jitter * z[k]
        lp_prop = kernel(k, prop)
        if np.isfinite(lp_prop) and log_u[k] < lp_prop - kernel(k, x):
            pop.states[k] = prop
            pop.accepted[k] += 1
    pop.sweeps += 1
    return pop
