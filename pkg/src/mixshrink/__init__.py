"""Mixtures of logistic regressions fitted by stochastic EM with ridge and Liu-type shrinkage."""

from .core import Dataset, MixtureParams, mixture_loglik
from .metrics import align_labels, evaluate_fit, summarize
from .sem import FitConfig, FitResult, Termination, fit
from .simulation import SimScenario, generate_sample, get_scenario, scenario_catalog
from .solvers import irwls_lt, irwls_ml, irwls_ridge, make_solver

__all__ = [
    "Dataset", "MixtureParams", "mixture_loglik",
    "align_labels", "evaluate_fit", "summarize",
    "FitConfig", "FitResult", "Termination", "fit",
    "SimScenario", "generate_sample", "get_scenario", "scenario_catalog",
    "irwls_lt", "irwls_ml", "irwls_ridge", "make_solver",
]
