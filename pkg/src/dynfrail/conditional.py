"""Closed-form conditional posteriors and plug-in Bayes estimators.

Baseline increments are conjugate gamma given the frailties, so both a Gibbs
draw and the posterior-mean estimator are available. Letting the prior
precision go to zero (``prior=None`` here) gives the Breslow-Aalen form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .event_data import Dataset, TimeGrid
from .model_core import ExposureCache, ModelParams, exposures
from .priors import GammaProcessPrior, prior_increment_shapes


@dataclass(frozen=True)
class IncrementPosterior:
    """Gamma(shape, rate) posterior of each baseline increment of one process.

    ``degenerate`` marks increments with zero rate and positive shape (no risk
    set under a zero-precision prior); they contribute exactly 0.
    """

    shape: np.ndarray
    rate: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return (self.rate <= 0) & (self.shape > 0)

    @property
    def mean(self) -> np.ndarray:
        out = np.zeros_like(self.shape)
        ok = self.rate > 0
        out[ok] = self.shape[ok] / self.rate[ok]
        return out


def risk_weights(dataset: Dataset, params: ModelParams, process: int,
                 frailties: np.ndarray | None = None) -> np.ndarray:
    """sum_i W_i exp(beta'X_i) Y_i(t_(j)) rho(N_i(t_(j)-)) for every grid point."""
    design = dataset.design
    W = params.frailties if frailties is None else np.asarray(frailties, dtype=float)
    coeffs = params.coeffs(process)
    w = (W * np.exp(design.X @ params.beta[process]))[design.seg_subject]
    w = w * (1.0 + design.seg_hist @ coeffs)
    return design.spread_to_grid(w[None, :])[0]


def increment_posteriors(dataset: Dataset, params: ModelParams,
                         prior: GammaProcessPrior | None, process: int,
                         frailties: np.ndarray | None = None) -> IncrementPosterior:
    """Conditional gamma posteriors of the baseline increments of ``process``.

    shape_j = sum_i dN_i(t_(j)) + c Lambda*(dt_(j)), rate_j = c + sum_i W_i e^{beta'X_i} Y rho.
    """
    design = dataset.design
    if not 0 <= process < design.n_processes:
        raise IndexError(f"process index {process} out of range")
    shape = design.grid_counts[process].copy()
    rate = risk_weights(dataset, params, process, frailties)
    if prior is not None and design.M:
        shape += prior_increment_shapes(prior, dataset.grid)
        rate += prior.precision
    return IncrementPosterior(shape, rate)


def sample_increments(posterior: IncrementPosterior, rng: np.random.Generator) -> np.ndarray:
    """Independent gamma draws; degenerate or zero-shape increments are 0."""
    shape, rate = posterior.shape, posterior.rate
    ok = (shape > 0) & (rate > 0)
    out = np.zeros_like(shape)
    out[ok] = rng.gamma(shape[ok]) / rate[ok]
    return out


def step_chf(increments: np.ndarray, grid_times: np.ndarray, t) -> np.ndarray | float:
    """Right-continuous step function sum_j inc_j 1{t_(j) <= t}."""
    cum = np.concatenate([[0.0], np.cumsum(increments)])
    out = cum[np.searchsorted(grid_times, t, side="right")]
    return float(out) if np.ndim(out) == 0 else out


def posterior_mean_chf(posterior: IncrementPosterior, grid: TimeGrid, t):
    """sum_j (shape_j / rate_j) 1{t_(j) <= t}."""
    return step_chf(posterior.mean, grid.times, t)


def frailty_posterior(dataset: Dataset, params: ModelParams, cache: ExposureCache | None = None,
                      subject: int | None = None):
    """Gamma(N_i + N_0i + nu, r_.i + r_0i + nu) parameters of the frailties.

    Returns ``(shape, rate)`` arrays over subjects, or scalars when ``subject``
    is given. ``cache`` must hold exposures excluding the frailty.
    """
    if cache is None:
        cache = exposures(dataset, params)
    shape = dataset.design.total_counts + params.nu
    rate = cache.total + params.nu
    if subject is not None:
        return float(shape[subject]), float(rate[subject])
    return shape, rate


def frailty_posterior_mean(dataset: Dataset, params: ModelParams,
                           cache: ExposureCache | None = None) -> np.ndarray:
    shape, rate = frailty_posterior(dataset, params, cache)
    return shape / rate


def plug_in_chf(dataset: Dataset, params: ModelParams, prior: GammaProcessPrior | None,
                process: int, t, frailty_estimates: np.ndarray | None = None):
    """Bayes plug-in CHF estimate with posterior-mean frailties substituted.

    ``frailty_estimates`` defaults to the frailty posterior means computed
    from ``params``.
    """
    if frailty_estimates is None:
        frailty_estimates = frailty_posterior_mean(dataset, params)
    post = increment_posteriors(dataset, params, prior, process, frailty_estimates)
    if prior is None and np.any(post.degenerate):
        j = int(np.flatnonzero(post.degenerate)[0])
        raise ZeroDivisionError(f"empty risk set at event time {dataset.grid.times[j]}")
    return posterior_mean_chf(post, dataset.grid, t)


def breslow_aalen(dataset: Dataset, params: ModelParams, process: int, t,
                  frailty_estimates: np.ndarray | None = None):
    """Breslow-Aalen-type estimator: the zero-precision limit of :func:`plug_in_chf`."""
    return plug_in_chf(dataset, params, None, process, t, frailty_estimates)
