"""Prior specification and log-density kernels for every parameter block."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .event_data import TimeGrid


@dataclass(frozen=True)
class MeanCHF:
    """Prior mean cumulative hazard.

    ``weibull``: (t / scale) ** shape; ``exponential``: t / scale.
    """

    family: str
    scale: float
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in ("weibull", "exponential"):
            raise ValueError(f"unknown mean CHF family {self.family!r}")
        if not (self.scale > 0 and self.shape > 0):
            raise ValueError("mean CHF scale and shape must be positive")
        if self.family == "exponential" and self.shape != 1.0:
            raise ValueError("exponential mean CHF has no shape parameter")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("mean CHF evaluated at negative time")
        return (t / self.scale) ** self.shape

    def to_dict(self) -> dict:
        d = {"family": self.family, "scale": self.scale}
        if self.family == "weibull":
            d["shape"] = self.shape
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeanCHF":
        return cls(d["family"], float(d["scale"]), float(d.get("shape", 1.0)))


@dataclass(frozen=True)
class GammaProcessPrior:
    """Gamma-process prior with precision ``c`` and mean CHF ``Lambda*``."""

    precision: float
    mean_chf: MeanCHF

    def __post_init__(self):
        if not self.precision > 0:
            raise ValueError("gamma-process precision must be > 0; use None for the c -> 0 limit")


def prior_increment_shapes(prior: GammaProcessPrior, grid: TimeGrid) -> np.ndarray:
    """Shape parameters c [Lambda*(t_(j)) - Lambda*(t_(j-1))], j = 1..M."""
    if len(grid) == 0:
        raise ValueError("empty grid")
    cum = prior.mean_chf(np.concatenate([[0.0], grid.times]))
    diff = np.diff(cum)
    if cum[0] != 0 or np.any(diff < 0):
        raise ValueError("mean CHF must start at 0 and be nondecreasing")
    return prior.precision * diff


@dataclass
class ParametricPriors:
    """Normal priors on regression blocks, gamma priors on nu and dynamic effects.

    Arrays are indexed by process (row 0 terminal). ``alpha_shape[q - 1, l]``
    is the shape of the prior on the effect of past type-(l+1) events on type q.
    Gamma priors use the shape/rate parameterization.
    """

    beta_mean: np.ndarray
    beta_cov: np.ndarray
    nu_shape: float
    nu_rate: float
    alpha_shape: np.ndarray
    alpha_rate: np.ndarray
    gamma_shape: np.ndarray
    gamma_rate: np.ndarray
    _beta_prec: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.beta_mean = np.atleast_2d(np.asarray(self.beta_mean, dtype=float))
        P, p = self.beta_mean.shape
        cov = np.asarray(self.beta_cov, dtype=float)
        if cov.ndim == 2 and cov.shape == (P, p):
            cov = np.stack([np.diag(row) for row in cov])
        if cov.shape != (P, p, p):
            raise ValueError(f"beta_cov must have shape ({P}, {p}, {p}) or ({P}, {p})")
        for c in cov:
            if not np.allclose(c, c.T) or (p and np.linalg.eigvalsh(c).min() <= 0):
                raise ValueError("beta covariance matrices must be symmetric positive definite")
        self.beta_cov = cov
        self._beta_prec = np.linalg.inv(cov) if p else cov
        Q = P - 1
        self.alpha_shape = np.broadcast_to(np.asarray(self.alpha_shape, float), (Q, Q)).copy()
        self.alpha_rate = np.broadcast_to(np.asarray(self.alpha_rate, float), (Q, Q)).copy()
        self.gamma_shape = np.broadcast_to(np.asarray(self.gamma_shape, float), (Q,)).copy()
        self.gamma_rate = np.broadcast_to(np.asarray(self.gamma_rate, float), (Q,)).copy()
        for name in ("alpha_shape", "alpha_rate", "gamma_shape", "gamma_rate"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if not (self.nu_shape > 0 and self.nu_rate > 0):
            raise ValueError("nu prior hyperparameters must be positive")

    @classmethod
    def default(cls, n_types: int, n_covariates: int, beta_var: float = 1.0,
                nu_shape: float = 1.0, nu_rate: float = 1.0,
                dyn_shape: float = 0.5, dyn_rate: float = 2.0) -> "ParametricPriors":
        """N(0, beta_var I) regression priors, Gamma(dyn_shape, dyn_rate) dynamic priors."""
        P = n_types + 1
        return cls(
            beta_mean=np.zeros((P, n_covariates)),
            beta_cov=np.full((P, n_covariates), float(beta_var)),
            nu_shape=nu_shape, nu_rate=nu_rate,
            alpha_shape=dyn_shape, alpha_rate=dyn_rate,
            gamma_shape=dyn_shape, gamma_rate=dyn_rate,
        )

    def dynamic_hyper(self, process: int) -> tuple[np.ndarray, np.ndarray]:
        if process == 0:
            return self.gamma_shape, self.gamma_rate
        return self.alpha_shape[process - 1], self.alpha_rate[process - 1]

    def beta_precision(self, process: int) -> np.ndarray:
        return self._beta_prec[process]


@dataclass
class ModelPriors:
    """All priors: one gamma process per process (index 0 terminal) plus parametric blocks."""

    processes: list[GammaProcessPrior]
    parametric: ParametricPriors

    def __post_init__(self):
        if len(self.processes) != self.parametric.beta_mean.shape[0]:
            raise ValueError("need one gamma-process prior per process")


def log_prior_beta(value, process: int, priors: ParametricPriors) -> float:
    """-(1/2)(beta - mu)' Sigma^{-1} (beta - mu), constant dropped."""
    d = np.asarray(value, dtype=float) - priors.beta_mean[process]
    return float(-0.5 * d @ priors.beta_precision(process) @ d)


def grad_log_prior_beta(value, process: int, priors: ParametricPriors) -> np.ndarray:
    d = np.asarray(value, dtype=float) - priors.beta_mean[process]
    return -priors.beta_precision(process) @ d


def log_prior_nu(nu: float, priors: ParametricPriors) -> float:
    """(zeta - 1) log nu - eta nu."""
    if not nu > 0:
        return -np.inf
    return float((priors.nu_shape - 1.0) * np.log(nu) - priors.nu_rate * nu)


def log_prior_dynamic(value, process: int, priors: ParametricPriors,
                      mask: np.ndarray | None = None) -> float:
    """Independent gamma kernels sum_l (a_l - 1) log x_l - b_l x_l over free components.

    Any free component <= 0 gives ``-inf``.
    """
    x = np.asarray(value, dtype=float)
    a, b = priors.dynamic_hyper(process)
    if mask is not None:
        x, a, b = x[mask], a[mask], b[mask]
    if np.any(x <= 0):
        return -np.inf
    return float(np.sum((a - 1.0) * np.log(x) - b * x))


def log_prior(block: str, value, priors: ParametricPriors, process: int | None = None,
              mask: np.ndarray | None = None) -> float:
    """Dispatch on ``block`` in {"beta", "alpha", "gamma", "nu"}.

    ``process`` names the regression block for ``beta`` (0 = terminal) and the
    recurrent type for ``alpha`` (1..Q).
    """
    if block == "nu":
        return log_prior_nu(float(value), priors)
    if block == "beta":
        return log_prior_beta(value, process, priors)
    if block == "alpha":
        if process is None or process < 1:
            raise ValueError("alpha block needs a recurrent type 1..Q")
        return log_prior_dynamic(value, process, priors, mask)
    if block == "gamma":
        return log_prior_dynamic(value, 0, priors, mask)
    raise ValueError(f"unknown block {block!r}")


def nu_prior_from_variance(variance: float, mean: float = 1.0) -> tuple[float, float]:
    """Gamma (shape, rate) with the given mean and variance."""
    return mean**2 / variance, mean / variance
