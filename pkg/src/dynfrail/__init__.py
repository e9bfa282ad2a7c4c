"""Bayesian joint model for multitype recurrent events and a terminal event
with a shared gamma frailty, dynamic history effects and gamma-process priors."""

from __future__ import annotations

__version__ = "0.1.0"

from .event_data import Dataset, DataError, Subject, TimeGrid, make_subject
from .mcmc import McmcConfig, PosteriorDraws, run_chain, run_chains
from .priors import GammaProcessPrior, MeanCHF, ModelPriors, ParametricPriors
from .simulate import Scenario, simulate_dataset

__all__ = [
    "DataError", "Dataset", "GammaProcessPrior", "McmcConfig", "MeanCHF", "ModelPriors",
    "ParametricPriors", "PosteriorDraws", "Scenario", "Subject", "TimeGrid", "make_subject",
    "run_chain", "run_chains", "simulate_dataset",
]
