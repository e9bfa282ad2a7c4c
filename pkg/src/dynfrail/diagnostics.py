"""Convergence diagnostics, posterior summaries and survival curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def gelman_rubin(chains) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is halved (a middle draw of an odd-length chain is dropped) and
    the halves are treated as separate chains:
    sqrt(((n - 1)/n W + B/n) / W), n the half-chain length.

    Parameters
    ----------
    chains : array_like, shape (m, N)
        At least two chains of equal length >= 4.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("need at least 2 chains of length >= 4")
    half = x.shape[1] // 2
    split = np.concatenate([x[:, :half], x[:, -half:]], axis=0)
    n = half
    means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        warnings.warn("zero within-chain variance; R-hat undefined", RuntimeWarning)
        return float("nan")
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row by FFT."""
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    acov = np.fft.irfft(f * np.conjugate(f), size, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(chains, cap: bool = False) -> float:
    """Multi-chain ESS with Geyer's initial positive (monotone) sequence truncation.

    Autocorrelations are combined across chains through the within/between
    variance estimate. ``cap=True`` limits the result to the total draw count.
    A constant input gives 0 with a warning.
    """
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = x.shape
    if n < 8:
        raise ValueError("need chains of length >= 8")
    acov = _autocovariance(x)
    chain_mean = x.mean(axis=1)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = chain_var.mean()
    var_plus = W * (n - 1.0) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus <= 0 or not np.isfinite(var_plus):
        warnings.warn("constant chain; effective sample size reported as 0", RuntimeWarning)
        return 0.0

    def corr(lag):
        return 1.0 - (W - acov[:, lag].mean()) / var_plus

    rho = np.zeros(n)
    rho[0] = even = 1.0
    rho[1] = odd = corr(1)
    t = 1
    while t < n - 3 and even + odd > 0:
        even, odd = corr(t + 1), corr(t + 2)
        if even + odd >= 0:
            rho[t + 1], rho[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0:
        rho[max_t + 1] = even
    # initial monotone sequence on the pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1]
    tau = max(tau, 1.0 / np.log10(m * n))
    ess = m * n / tau
    return float(min(ess, m * n)) if cap else float(ess)


@dataclass(frozen=True)
class SummaryRow:
    """Posterior summary of one parameter; ``std_error`` is the posterior SD."""

    name: str
    mean: float
    std_error: float
    lower: float
    upper: float
    hazard_ratio: float | None = None


def equal_tailed_interval(draws, level: float = 0.95) -> tuple[float, float]:
    lo, hi = np.quantile(np.asarray(draws, dtype=float).ravel(),
                         [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def summarize(draws, level: float = 0.95) -> list[SummaryRow]:
    """Posterior mean, SD, equal-tailed interval, and exp(mean) for regression rows.

    ``draws`` is a :class:`~dynfrail.mcmc.PosteriorDraws` or a mapping of
    name -> array of draws.
    """
    if hasattr(draws, "names"):
        items = [(name, draws.pooled(name)) for name in draws.names]
    else:
        items = list(draws.items())
    rows = []
    for name, x in items:
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            raise ValueError(f"no draws for {name}")
        mean = float(x.mean())
        lo, hi = equal_tailed_interval(x, level)
        # floating-point guard so the interval always brackets the mean
        lo, hi = min(lo, mean), max(hi, mean)
        hr = float(np.exp(mean)) if name.startswith("beta") else None
        rows.append(SummaryRow(name, mean, float(x.std(ddof=1)) if x.size > 1 else 0.0,
                               lo, hi, hr))
    return rows


def survival_from_chf(chf, nu=None, linear_predictor=0.0, marginal: bool = True):
    """Survival from cumulative hazard.

    Marginal over a Gamma(nu, nu) frailty: (nu / (nu + L e^{eta}))^nu;
    conditional (``marginal=False``): exp(-L e^{eta}).
    """
    L = np.asarray(chf, dtype=float) * np.exp(np.asarray(linear_predictor, dtype=float))
    if not marginal:
        return np.exp(-L)
    nu = np.asarray(nu, dtype=float)
    return np.exp(-nu * np.log1p(L / nu))


@dataclass(frozen=True)
class SurvivalCurve:
    time: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self) -> dict:
        return {"time": self.time.tolist(), "mean": self.mean.tolist(),
                "lo": self.lower.tolist(), "hi": self.upper.tolist()}


def marginal_survival(chf_draws, nu_draws, covariates=None, times=None, beta_draws=None,
                      marginal: bool = True, level: float = 0.95) -> SurvivalCurve:
    """Pointwise posterior mean and equal-tailed band of S(t | x).

    Parameters
    ----------
    chf_draws : array_like, shape (D, T)
        Baseline CHF of each draw at ``times``.
    nu_draws : array_like, shape (D,)
    covariates : array_like, shape (p,), optional
        Profile x; requires ``beta_draws`` of shape (D, p).
    """
    chf = np.atleast_2d(np.asarray(chf_draws, dtype=float))
    nu = np.asarray(nu_draws, dtype=float).reshape(-1, 1)
    if covariates is not None and beta_draws is not None:
        eta = (np.asarray(beta_draws, dtype=float) @ np.asarray(covariates, dtype=float))[:, None]
    else:
        eta = 0.0
    S = survival_from_chf(chf, nu, eta, marginal)
    lo, hi = np.quantile(S, [(1 - level) / 2, (1 + level) / 2], axis=0)
    t = np.arange(chf.shape[1], dtype=float) if times is None else np.asarray(times, dtype=float)
    return SurvivalCurve(t, S.mean(axis=0), lo, hi)


def draws_survival(draws, process: int, times, covariates=None, marginal: bool = True,
                   level: float = 0.95) -> SurvivalCurve:
    """Survival curve of ``process`` from a PosteriorDraws object, all chains pooled."""
    times = np.asarray(times, dtype=float)
    chf = draws.chf(process, times).reshape(-1, times.size)
    nu = draws.pooled("nu")
    beta = draws.beta(process).reshape(-1, draws.n_covariates) if covariates is not None else None
    return marginal_survival(chf, nu, covariates, times, beta, marginal, level)


def convergence_table(draws, cap_ess: bool = True) -> list[dict]:
    """R-hat (needs >= 2 chains), ESS and ESS as a percentage of all stored draws."""
    rows = []
    total = draws.n_chains * draws.n_kept
    for name in draws.names:
        x = draws.column(name)
        rhat = gelman_rubin(x) if draws.n_chains >= 2 else float("nan")
        raw = effective_sample_size(x)
        ess = min(raw, total) if cap_ess else raw
        rows.append({"parameter": name, "rhat": rhat, "ess": ess, "ess_raw": raw,
                     "ess_pct": 100.0 * ess / total})
    return rows
