"""Full Gibbs/MH/DE-MC sweep, burn-in, thinning and multi-chain execution.

Each chain carries a population of complete model states ("members"). The
baseline increments, the frailty precision and the frailties of every member
are updated from their own conditionals; the regression and dynamic blocks are
updated member by member with differential-evolution proposals built from the
other members' values of the same block. Stored draws follow member 0.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .event_data import Dataset
from .model_core import (HazardIncrements, ModelParams, base_exposure, cumulative_with_origin,
                         subject_masses)
from .priors import ModelPriors, prior_increment_shapes
from .samplers import (DemcPopulation, MhState, adapt_scale, beta_kernel, demc_update,
                       dynamic_kernel, log_kernel_nu, mh_update_nu)

log = logging.getLogger(__name__)

UPDATE_MODES = ("sample", "posterior_mean")
STRUCTURES = ("same_type", "full")


class InitializationError(RuntimeError):
    pass


@dataclass
class McmcConfig:
    """Sampler settings.

    ``update_mode`` switches the closed-form blocks (baseline increments and
    frailties) between Gibbs draws and posterior-mean updates; the latter is
    not a proper Gibbs step and is labelled approximate in the output.
    ``dynamic_structure="same_type"`` keeps only the own-type effect in each
    alpha_q (all of gamma stays free).
    """

    iterations: int = 2500
    burn_in: int = 1000
    thin: int = 5
    n_chains: int = 1
    seed: int = 0
    update_mode: str = "sample"
    dynamic_structure: str = "same_type"
    population_size: int | None = None
    init_jitter: float = 0.1
    nu_proposal_scale: float = 0.3
    adapt_every: int = 50
    demc_jitter: float = 1e-4
    big_step_every: int = 10
    workers: int = 1
    store_full_frailties: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        if self.dynamic_structure not in STRUCTURES:
            raise ValueError(f"dynamic_structure must be one of {STRUCTURES}")

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)


def dynamic_mask(n_types: int, structure: str) -> np.ndarray:
    """Free dynamic components per process, shape (Q + 1, Q); row 0 is gamma."""
    mask = np.ones((n_types + 1, n_types), dtype=bool)
    if structure == "same_type":
        mask[1:] = np.eye(n_types, dtype=bool)
    return mask


def parameter_names(dataset: Dataset, mask: np.ndarray) -> list[str]:
    """Scalar parameter names in storage order: beta_q*, beta_0*, alpha, gamma, nu."""
    Q, p = dataset.n_types, dataset.n_covariates
    names = []
    for q in list(range(1, Q + 1)) + [0]:
        names += [f"beta_{q}{k + 1}" for k in range(p)]
    for q in range(1, Q + 1):
        for l in np.flatnonzero(mask[q]):
            names.append(f"alpha_{q}" if mask[q].sum() == 1 and l == q - 1 else f"alpha_{q}_{l + 1}")
    names += [f"gamma_{l + 1}" for l in np.flatnonzero(mask[0])]
    names.append("nu")
    return names


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws.

    ``values`` has shape (chains, kept, n_params) in ``names`` order;
    ``increments`` (chains, kept, Q + 1, M) holds full baseline increment
    vectors on ``grid_times``; ``frailty_means`` (chains, kept, n) the
    conditional posterior means of the frailties at each kept iteration.
    """

    names: list[str]
    values: np.ndarray
    increments: np.ndarray
    frailty_means: np.ndarray
    log_likelihood: np.ndarray
    iterations: np.ndarray
    grid_times: np.ndarray
    n_types: int
    n_covariates: int
    covariate_names: list[str]
    metadata: dict = field(default_factory=dict)
    frailties: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def n_kept(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        """(chains, kept) series of one scalar parameter."""
        return self.values[:, :, self.names.index(name)]

    def beta(self, process: int) -> np.ndarray:
        """(chains, kept, p) draws of the regression block of ``process``."""
        cols = [self.names.index(f"beta_{process}{k + 1}") for k in range(self.n_covariates)]
        return self.values[:, :, cols]

    def chf(self, process: int, t) -> np.ndarray:
        """(chains, kept, len(t)) baseline CHF draws evaluated at ``t``."""
        cum = cumulative_with_origin(self.increments[:, :, process, :])
        k = np.searchsorted(self.grid_times, np.atleast_1d(t), side="right")
        return cum[..., k]

    def pooled(self, name: str) -> np.ndarray:
        return self.column(name).reshape(-1)

    @staticmethod
    def concatenate(parts: list["PosteriorDraws"]) -> "PosteriorDraws":
        first = parts[0]
        meta = dict(first.metadata)
        meta["chains"] = [p.metadata.get("chain", {}) for p in parts]
        meta.pop("chain", None)
        full = None
        if all(p.frailties is not None for p in parts):
            full = np.concatenate([p.frailties for p in parts])
        return PosteriorDraws(
            names=first.names,
            values=np.concatenate([p.values for p in parts]),
            increments=np.concatenate([p.increments for p in parts]),
            frailty_means=np.concatenate([p.frailty_means for p in parts]),
            log_likelihood=np.concatenate([p.log_likelihood for p in parts]),
            iterations=first.iterations,
            grid_times=first.grid_times,
            n_types=first.n_types,
            n_covariates=first.n_covariates,
            covariate_names=first.covariate_names,
            metadata=meta,
            frailties=full,
        )


def population_size(config: McmcConfig, dataset: Dataset, mask: np.ndarray) -> int:
    dims = [dataset.n_covariates, int(mask.sum(axis=1).max())]
    default = max(8, 2 * max(dims))
    return config.population_size or default


def initialize(dataset: Dataset, priors: ModelPriors, rng: np.random.Generator,
               jitter: float = 0.1, structure: str = "same_type") -> ModelParams:
    """Starting values.

    Increments equal the prior mean increments, frailties are 1. With
    ``jitter > 0``: beta ~ N(0, jitter^2), nu = exp(jitter z) and the dynamic
    coefficients are drawn from their priors; ``jitter = 0`` gives beta = 0,
    nu = 1 and prior-mean dynamic coefficients.
    """
    Q, p, n = dataset.n_types, dataset.n_covariates, len(dataset)
    grid = dataset.grid
    P = Q + 1
    if len(grid):
        inc = np.vstack([prior_increment_shapes(pr, grid) / pr.precision for pr in priors.processes])
    else:
        inc = np.zeros((P, 0))
    mask = dynamic_mask(Q, structure)
    pp = priors.parametric
    shape = np.vstack([pp.gamma_shape[None, :], pp.alpha_shape])
    rate = np.vstack([pp.gamma_rate[None, :], pp.alpha_rate])
    if jitter > 0:
        beta = jitter * rng.standard_normal((P, p))
        dyn = rng.gamma(shape) / rate
        nu = float(np.exp(jitter * rng.standard_normal()))
    else:
        beta = np.zeros((P, p))
        dyn = shape / rate
        nu = 1.0
    dyn = np.where(mask, np.maximum(dyn, 1e-12), 0.0)
    return ModelParams(HazardIncrements(inc), beta, dyn[1:], dyn[0], nu, np.ones(n))


class _PopulationSampler:
    """Vectorized state of every member of one chain's population."""

    def __init__(self, dataset: Dataset, priors: ModelPriors, config: McmcConfig,
                 rng: np.random.Generator):
        self.dataset = dataset
        self.design = d = dataset.design
        self.config = config
        self.rng = rng
        self.pp = priors.parametric
        self.Q, self.P, self.n, self.M = d.n_types, d.n_processes, d.n, d.M
        self.mask = dynamic_mask(self.Q, config.dynamic_structure)
        self.K = population_size(config, dataset, self.mask)
        if d.M:
            self.prior_shape = np.vstack([prior_increment_shapes(pr, dataset.grid)
                                          for pr in priors.processes])
        else:
            self.prior_shape = np.zeros((self.P, 0))
        self.prior_rate = np.array([pr.precision for pr in priors.processes])
        self.dyn_shape = np.vstack([self.pp.gamma_shape[None, :], self.pp.alpha_shape])
        self.dyn_rate = np.vstack([self.pp.gamma_rate[None, :], self.pp.alpha_rate])

        inits = [initialize(dataset, priors, rng, config.init_jitter, config.dynamic_structure)
                 for _ in range(self.K)]
        self.inits = inits
        self.lam = np.stack([m.increments.values for m in inits])
        self.beta = np.stack([m.beta for m in inits])
        self.dyn = np.stack([m.coeff_matrix() for m in inits])
        self.nu = np.array([m.nu for m in inits])
        self.W = np.ones((self.K, self.n))
        self.nu_state = MhState(self.nu, scale=config.nu_proposal_scale)
        self._window = [0, 0]

        big = config.big_step_every
        self.beta_pops = [DemcPopulation(self.beta[:, p, :], jitter=config.demc_jitter,
                                         big_step_every=big) if d.n_covariates else None
                          for p in range(self.P)]
        self.dyn_pops = [DemcPopulation(self.dyn[:, p, self.mask[p]], jitter=config.demc_jitter,
                                        big_step_every=big) for p in range(self.P)]
        self.degenerate = np.zeros(self.P, dtype=int)
        self.refresh_exposures()

    # -- derived quantities ---------------------------------------------------

    def linear_predictors(self) -> np.ndarray:
        return np.einsum("kpc,nc->kpn", self.beta, self.design.X)

    def refresh_exposures(self):
        self.S, self.A = subject_masses(self.design, self.lam)
        self.lin = self.linear_predictors()
        self.base = base_exposure(self.S, self.A, self.dyn)
        self.r = np.exp(self.lin) * self.base
        with np.errstate(divide="ignore"):
            self.log_lam = np.log(self.lam)

    def member_log_likelihood(self, k: int) -> float:
        d = self.design
        base = base_exposure(self.S[k], self.A[k], self.dyn[k])
        lin = self.lin[k]
        logW = np.log(self.W[k])
        total = 0.0
        for p in range(self.P):
            subj = d.ev_subject[p]
            if subj.size:
                rho = 1.0 + d.ev_hist[p] @ self.dyn[k, p]
                with np.errstate(divide="ignore"):
                    total += np.sum(np.log(rho * self.lam[k, p, d.ev_index[p]]))
                total += logW[subj].sum() + lin[p, subj].sum()
            total -= self.W[k] @ (np.exp(lin[p]) * base[p])
        return float(total)

    # -- sweep steps ------------------------------------------------------------

    def update_increments(self):
        d = self.design
        if self.M == 0:
            return
        rho_seg = 1.0 + np.einsum("gq,kpq->kpg", d.seg_hist, self.dyn)
        sw = self.W[:, None, :] * np.exp(self.lin)
        w = sw[:, :, d.seg_subject] * rho_seg
        rate = d.spread_to_grid(w.reshape(self.K * self.P, d.G)).reshape(self.K, self.P, self.M)
        rate += self.prior_rate[None, :, None]
        shape = np.broadcast_to(d.grid_counts + self.prior_shape, rate.shape)
        ok = (shape > 0) & (rate > 0)
        self.degenerate = ((shape > 0) & (rate <= 0)).sum(axis=(0, 2))
        safe_rate = np.where(ok, rate, 1.0)
        if self.config.update_mode == "sample":
            draw = self.rng.gamma(np.where(ok, shape, 1.0)) / safe_rate
        else:
            draw = shape / safe_rate
        self.lam = np.where(ok, draw, 0.0)

    def update_nu(self):
        N = self.design.total_counts
        r_tot = self.r.sum(axis=1)
        self.nu_state = mh_update_nu(
            MhState(self.nu, self.nu_state.scale, self.nu_state.accepted, self.nu_state.proposed),
            lambda v: log_kernel_nu(v, N, r_tot, self.pp), self.rng)
        self.nu = np.asarray(self.nu_state.value, dtype=float).reshape(self.K)

    def update_frailties(self):
        shape = self.design.total_counts[None, :] + self.nu[:, None]
        rate = self.r.sum(axis=1) + self.nu[:, None]
        if self.config.update_mode == "sample":
            self.W = self.rng.gamma(shape) / rate
        else:
            self.W = shape / rate
        # guard against underflow to exactly zero
        np.maximum(self.W, np.finfo(float).tiny, out=self.W)

    def update_beta(self, p: int):
        pop = self.beta_pops[p]
        if pop is None:
            return
        d, pp = self.design, self.pp
        xs, X = d.covariate_event_sums[p], d.X
        mu, prec = pp.beta_mean[p], pp.beta_precision(p)
        W, base = self.W, self.base[:, p, :]

        def kernel(k, b):
            return beta_kernel(b, xs, X, W[k], base[k], mu, prec)

        pop.states[:] = self.beta[:, p, :]
        demc_update(pop, kernel, self.rng)
        self.beta[:, p, :] = pop.states
        self.lin[:, p, :] = pop.states @ X.T

    def update_dynamic(self, p: int):
        pop = self.dyn_pops[p]
        d = self.design
        mask = self.mask[p]
        ev_hist = d.ev_hist[p]
        log_inc = self.log_lam[:, p, d.ev_index[p]].sum(axis=1)
        sw = self.W * np.exp(self.lin[:, p, :])
        S, A = self.S[:, p], self.A[:, p]
        a, b = self.dyn_shape[p], self.dyn_rate[p]
        full = np.zeros(self.Q)

        def kernel(k, x):
            c = full.copy()
            c[mask] = x
            return dynamic_kernel(c, ev_hist, log_inc[k], sw[k], S[k], A[k], a, b, mask)

        pop.states[:] = self.dyn[:, p, mask]
        demc_update(pop, kernel, self.rng)
        self.dyn[:, p, mask] = pop.states
        self.base[:, p] = base_exposure(self.S[:, p:p + 1], self.A[:, p:p + 1],
                                        self.dyn[:, p:p + 1])[:, 0]

    def sweep(self, iteration: int):
        self.update_increments()                       # (a), (b)
        self.refresh_exposures()                       # (c)
        self.update_nu()                               # (d)
        self.update_frailties()                        # (e)
        for p in list(range(1, self.P)) + [0]:         # (f), (g)
            self.update_beta(p)
        for p in list(range(1, self.P)) + [0]:         # (h), (i)
            self.update_dynamic(p)
        self.r = np.exp(self.lin) * self.base
        self._adapt(iteration)

    def _adapt(self, iteration: int):
        cfg = self.config
        if iteration > cfg.burn_in or not cfg.adapt_every:
            return
        if iteration % cfg.adapt_every == 0:
            acc = self.nu_state.accepted - self._window[0]
            prop = self.nu_state.proposed - self._window[1]
            if prop:
                self.nu_state.scale = adapt_scale(self.nu_state.scale, acc / prop)
            self._window = [self.nu_state.accepted, self.nu_state.proposed]

    # -- output -------------------------------------------------------------------

    def scalar_values(self, k: int) -> np.ndarray:
        Q = self.Q
        parts = [self.beta[k, q] for q in list(range(1, Q + 1)) + [0]]
        parts += [self.dyn[k, q, self.mask[q]] for q in range(1, Q + 1)]
        parts += [self.dyn[k, 0, self.mask[0]], [self.nu[k]]]
        return np.concatenate(parts)

    def frailty_mean(self, k: int) -> np.ndarray:
        return (self.design.total_counts + self.nu[k]) / (self.r[k].sum(axis=0) + self.nu[k])


def _check_finite(sampler: _PopulationSampler, stage: str):
    bad = [k for k in range(sampler.K) if not np.isfinite(sampler.member_log_likelihood(k))]
    if bad:
        k = bad[0]
        dump = {
            "stage": stage,
            "member": k,
            "nu": float(sampler.nu[k]),
            "beta": sampler.beta[k].tolist(),
            "dynamic": sampler.dyn[k].tolist(),
            "zero_increments_at_events": [
                int(np.sum(sampler.lam[k, p, sampler.design.ev_index[p]] <= 0))
                for p in range(sampler.P)
            ],
        }
        raise InitializationError(f"non-finite log-likelihood: {json.dumps(dump)}")


def run_chain(dataset: Dataset, priors: ModelPriors, config: McmcConfig,
              chain_seed, chain_index: int = 0) -> PosteriorDraws:
    """Run one chain and keep every ``thin``-th post-burn-in sweep."""
    rng = np.random.default_rng(chain_seed)
    design = dataset.design
    for p in range(design.n_processes):
        if design.ev_subject[p].size == 0:
            log.warning("process %d has no observed events", p)
    sampler = _PopulationSampler(dataset, priors, config, rng)
    _check_finite(sampler, "initialization")
    init0 = sampler.inits[0]

    kept = config.n_kept
    names = parameter_names(dataset, sampler.mask)
    values = np.empty((kept, len(names)))
    incs = np.empty((kept, sampler.P, sampler.M))
    fmeans = np.empty((kept, sampler.n))
    loglik = np.empty(kept)
    full_w = np.empty((kept, sampler.n)) if config.store_full_frailties else None
    iters = np.empty(kept, dtype=int)
    degenerate = np.zeros(sampler.P, dtype=int)

    slot = 0
    for b in range(1, config.iterations + 1):
        sampler.sweep(b)
        degenerate += sampler.degenerate
        ll = sampler.member_log_likelihood(0)
        if not np.isfinite(ll):
            _check_finite(sampler, f"iteration {b}")
        if b > config.burn_in and (b - config.burn_in) % config.thin == 0 and slot < kept:
            values[slot] = sampler.scalar_values(0)
            incs[slot] = sampler.lam[0]
            fmeans[slot] = sampler.frailty_mean(0)
            loglik[slot] = ll
            if full_w is not None:
                full_w[slot] = sampler.W[0]
            iters[slot] = b
            slot += 1

    meta = {
        "update_mode": config.update_mode,
        "approximate": config.update_mode == "posterior_mean",
        "dynamic_structure": config.dynamic_structure,
        "population_size": sampler.K,
        "config": config.to_dict(),
        "chain": {
            "index": chain_index,
            "seed": _seed_repr(chain_seed),
            "init": {
                "beta": init0.beta.tolist(),
                "alpha": init0.alpha.tolist(),
                "gamma": init0.gamma.tolist(),
                "nu": init0.nu,
            },
            "nu_acceptance": sampler.nu_state.acceptance_rate,
            "nu_final_scale": sampler.nu_state.scale,
            "beta_acceptance": [p.acceptance_rate if p else None for p in sampler.beta_pops],
            "dynamic_acceptance": [p.acceptance_rate for p in sampler.dyn_pops],
            "degenerate_increments": degenerate.tolist(),
        },
    }
    return PosteriorDraws(
        names=names, values=values[None], increments=incs[None], frailty_means=fmeans[None],
        log_likelihood=loglik[None], iterations=iters, grid_times=design.times.copy(),
        n_types=dataset.n_types, n_covariates=dataset.n_covariates,
        covariate_names=list(dataset.covariate_names), metadata=meta,
        frailties=None if full_w is None else full_w[None],
    )


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def chain_seeds(master_seed, n_chains: int) -> list[np.random.SeedSequence]:
    """Independent chain streams from an int or a SeedSequence."""
    root = master_seed if isinstance(master_seed, np.random.SeedSequence) \
        else np.random.SeedSequence(master_seed)
    return root.spawn(n_chains)


def _run_chain_job(args):
    return run_chain(*args)


def run_chains(dataset: Dataset, priors: ModelPriors, config: McmcConfig,
               workers: int | None = None, seed=None) -> PosteriorDraws:
    """Run ``config.n_chains`` independent chains, serially or in worker processes.

    Chain seeds are spawned from ``seed`` (default ``config.seed``); output is
    ordered by chain index and identical for any worker count.
    """
    seeds = chain_seeds(config.seed if seed is None else seed, config.n_chains)
    jobs = [(dataset, priors, config, s, c) for c, s in enumerate(seeds)]
    workers = config.workers if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chain_job, jobs))
    else:
        parts = [_run_chain_job(j) for j in jobs]
    return PosteriorDraws.concatenate(parts)
