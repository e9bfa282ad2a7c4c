"""Repeated simulate-and-fit studies: bias, SD, RMSE, coverage and
pointwise survival RMSE."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import draws_survival, equal_tailed_interval, survival_from_chf
from .mcmc import McmcConfig, run_chains
from .priors import GammaProcessPrior, MeanCHF, ModelPriors, ParametricPriors, nu_prior_from_variance
from .simulate import Scenario, simulate_dataset

log = logging.getLogger(__name__)

DEFAULT_SURVIVAL_TIMES = np.round(np.arange(0.1, 3.0001, 0.1), 10)

# (beta prior variance, nu prior variance)
PRIOR_VARIANCE_ARMS = {
    "standard": (1.0, 0.5),
    "strong": (0.25, 0.25),
    "weak": (2.25, 1.0),
    "vague": (9.0, 2.0),
}
MISSPECIFIED_RECURRENT_SCALES = (10.0, 11.0, 12.0)
MISSPECIFIED_TERMINAL_SCALE = 13.0
MISSPECIFIED_PRECISION = 0.01


@dataclass
class FitSpec:
    """What to fit to each simulated dataset."""

    priors: ModelPriors
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    survival_times: np.ndarray = field(default_factory=lambda: DEFAULT_SURVIVAL_TIMES.copy())


@dataclass
class ReplicateResult:
    names: list[str]
    estimates: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    survival: np.ndarray  # (Q + 1, T) posterior-mean baseline survival at x = 0


def correct_priors(scenario: Scenario, precision: float = 0.1, beta_var: float = 1.0,
                   nu_shape: float = 1.0, nu_rate: float = 1.0,
                   dyn_shape: float = 0.5, dyn_rate: float = 2.0) -> ModelPriors:
    """Gamma-process priors centred on the true Weibull CHFs plus default parametric priors."""
    procs = [GammaProcessPrior(precision, MeanCHF("weibull", s, scenario.weibull_shape))
             for s in scenario.process_scales()]
    return ModelPriors(procs, ParametricPriors.default(
        scenario.n_types, scenario.n_covariates, beta_var, nu_shape, nu_rate, dyn_shape, dyn_rate))


def misspecified_priors(parametric: ParametricPriors,
                        recurrent_scales=MISSPECIFIED_RECURRENT_SCALES,
                        terminal_scale: float = MISSPECIFIED_TERMINAL_SCALE,
                        precision: float = MISSPECIFIED_PRECISION) -> ModelPriors:
    """Exponential working means t / scale for every baseline."""
    scales = (terminal_scale,) + tuple(recurrent_scales)
    procs = [GammaProcessPrior(precision, MeanCHF("exponential", s)) for s in scales]
    return ModelPriors(procs, parametric)


def true_baseline_survival(scenario: Scenario, process: int, times) -> np.ndarray:
    """Frailty-marginal survival at x = 0 and zero history under the true model."""
    return survival_from_chf(scenario.true_chf(process, times), scenario.nu_true)


def mcmc_fitter(dataset, spec: FitSpec, seed) -> ReplicateResult:
    draws = run_chains(dataset, spec.priors, spec.mcmc, workers=1, seed=seed)
    est = np.array([draws.pooled(n).mean() for n in draws.names])
    ci = np.array([equal_tailed_interval(draws.pooled(n)) for n in draws.names])
    surv = np.vstack([draws_survival(draws, p, spec.survival_times).mean
                      for p in range(dataset.n_types + 1)])
    return ReplicateResult(draws.names, est, ci[:, 0], ci[:, 1], surv)


def pointwise_survival_rmse(curves, truth) -> np.ndarray:
    """sqrt(mean_r (S_r(t) - S(t))^2) at each grid time; ``curves`` is (R, T)."""
    c = np.atleast_2d(np.asarray(curves, dtype=float))
    return np.sqrt(np.mean((c - np.asarray(truth, dtype=float)) ** 2, axis=0))


@dataclass
class ReplicationReport:
    names: list[str]
    truth: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray
    survival_times: np.ndarray
    survival_rmse: np.ndarray  # (Q + 1, T), row 0 terminal
    scenario: dict
    n_replicates: int
    n_failed: int
    failures: list[str]
    estimates: np.ndarray
    label: str = ""

    def row(self, name: str) -> dict:
        k = self.names.index(name)
        return {"bias": float(self.bias[k]), "sd": float(self.sd[k]), "rmse": float(self.rmse[k]),
                "cp": float(self.coverage[k])}

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "scenario": self.scenario,
            "n_replicates": self.n_replicates,
            "n_failed": self.n_failed,
            "failures": self.failures,
            "parameters": {n: {"truth": float(self.truth[k]), **self.row(n)}
                           for k, n in enumerate(self.names)},
            "survival_times": self.survival_times.tolist(),
            "survival_rmse": {str(p): self.survival_rmse[p].tolist()
                              for p in range(self.survival_rmse.shape[0])},
        }


def aggregate(results: list[ReplicateResult], truth: dict, scenario: Scenario,
              times: np.ndarray, failures: list[str], label: str = "") -> ReplicationReport:
    if not results:
        raise RuntimeError(f"every replicate failed: {failures[:3]}")
    names = results[0].names
    t = np.array([truth[n] for n in names])
    est = np.vstack([r.estimates for r in results])
    lo = np.vstack([r.lower for r in results])
    hi = np.vstack([r.upper for r in results])
    err = est - t
    bias = err.mean(axis=0)
    sd = est.std(axis=0)
    rmse = np.sqrt(np.mean(err**2, axis=0))
    cp = np.mean((lo <= t) & (t <= hi), axis=0)
    surv = np.stack([r.survival for r in results])
    true_surv = np.vstack([true_baseline_survival(scenario, p, times)
                           for p in range(scenario.n_types + 1)])
    srmse = np.vstack([pointwise_survival_rmse(surv[:, p], true_surv[p])
                       for p in range(surv.shape[1])])
    return ReplicationReport(names, t, bias, sd, rmse, cp, np.asarray(times), srmse,
                             scenario.to_dict(), len(results) + len(failures), len(failures),
                             failures, est, label)


def _replicate_job(args):
    scenario, spec, sim_seed, fit_seed, fitter = args
    try:
        data = simulate_dataset(scenario, sim_seed)
        return fitter(data, spec, fit_seed)
    except Exception as exc:  # noqa: BLE001 - a failed replicate is recorded, not fatal
        return f"{type(exc).__name__}: {exc}"


def replicate_seeds(master_seed: int, R: int):
    """(simulation, fit) seed pair per replicate."""
    return [tuple(s.spawn(2)) for s in np.random.SeedSequence(master_seed).spawn(R)]


def run_scenario(scenario: Scenario, spec: FitSpec, R: int, master_seed: int,
                 workers: int = 1, fitter: Callable | None = None,
                 label: str = "") -> ReplicationReport:
    """Simulate and fit ``R`` datasets; aggregate against the scenario truth.

    Replicate r always uses the r-th seed pair spawned from ``master_seed``,
    so reports do not depend on ``workers`` or execution order.
    """
    if R < 2:
        raise ValueError("need R >= 2 replicates")
    fitter = fitter or mcmc_fitter
    jobs = [(scenario, spec, s, f, fitter) for s, f in replicate_seeds(master_seed, R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_replicate_job, jobs))
    else:
        outs = [_replicate_job(j) for j in jobs]
    results = [o for o in outs if isinstance(o, ReplicateResult)]
    failures = [f"replicate {r}: {o}" for r, o in enumerate(outs) if isinstance(o, str)]
    for f in failures:
        log.warning(f)
    truth = scenario.true_parameters(results[0].names) if results else {}
    return aggregate(results, truth, scenario, spec.survival_times, failures, label)


def arm_spec(base: FitSpec, arm: str) -> FitSpec:
    """Fit spec for one sensitivity arm.

    Prior-variance arms keep the gamma-process priors and set N(mu, var_beta I)
    regression priors and a gamma nu prior with the base prior mean and the
    arm's variance. ``misspecified`` takes the standard arm's parametric priors
    with exponential working means and precision 0.01.
    """
    pp = base.priors.parametric
    if arm == "misspecified":
        standard = arm_spec(base, "standard").priors.parametric
        return replace(base, priors=misspecified_priors(standard))
    if arm not in PRIOR_VARIANCE_ARMS:
        raise ValueError(f"unknown arm {arm!r}")
    beta_var, nu_var = PRIOR_VARIANCE_ARMS[arm]
    nu_shape, nu_rate = nu_prior_from_variance(nu_var, pp.nu_shape / pp.nu_rate)
    P, p = pp.beta_mean.shape
    new_pp = ParametricPriors(pp.beta_mean.copy(), np.full((P, p), beta_var), nu_shape, nu_rate,
                              pp.alpha_shape, pp.alpha_rate, pp.gamma_shape, pp.gamma_rate)
    return replace(base, priors=ModelPriors(list(base.priors.processes), new_pp))


SENSITIVITY_ARMS = ("standard", "strong", "weak", "vague", "misspecified")


def sensitivity_suite(scenario: Scenario, base: FitSpec, R: int, master_seed: int,
                      arms=SENSITIVITY_ARMS, workers: int = 1,
                      fitter: Callable | None = None) -> dict[str, ReplicationReport]:
    """One report per arm; every arm reuses the same simulated datasets."""
    return {arm: run_scenario(scenario, arm_spec(base, arm), R, master_seed, workers, fitter,
                              label=arm)
            for arm in arms}


def table_rows(reports: list[ReplicationReport]) -> list[dict]:
    """Rows in the layout Parameter, n, then Bias/SD/RMSE/CP per nu column."""
    nus = sorted({r.scenario["nu_true"] for r in reports})
    ns = sorted({r.scenario["n"] for r in reports})
    names = reports[0].names
    rows = []
    for name in names:
        for n in ns:
            row = {"Parameter": name, "n": n}
            for nu in nus:
                match = [r for r in reports if r.scenario["n"] == n and r.scenario["nu_true"] == nu]
                vals = match[0].row(name) if match else {}
                for key, col in (("bias", "Bias"), ("sd", "SD"), ("rmse", "RMSE"), ("cp", "CP")):
                    row[f"{col} (nu={nu:g})"] = vals.get(key, float("nan"))
            rows.append(row)
    return rows
