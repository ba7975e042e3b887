"""Model-free inference for high-dimensional binary regression via
noise-augmented candidate model sets, Wald confidence sets for working-GLM
coefficients, and Monte-Carlo model confidence sets."""

from .candidates import CandidateSet, build_candidate_set, ebic_score, \
    recovery_loss
from .glm import Dataset, SeparationError, WorkingModel, fit_quasi_mle, \
    inv_logit, link_logit, loglik
from .inference import chi2_quantile, confset_Abeta, confset_beta_j, \
    confset_case_prob, rank_factorize, sandwich_cov, wald_stat
from .modelcs import model_confidence_set, nuclear_stat, profile_nuclear, \
    simulate_selector_distribution
from .rng import substream
from .solvers import SolverError, SurrogateLoss, adaptive_weights, \
    fit_adaptive_l1, fit_ridge_cv, l1_logistic_path, path_model_selector
from .synthetic import PopulationTarget, SimDesign, gen_design, \
    gen_response, mean_function, population_targets, \
    realized_working_noise, sim_design

__version__ = "0.1.0"

__all__ = [
    "CandidateSet", "Dataset", "PopulationTarget", "SeparationError",
    "SimDesign", "SolverError", "SurrogateLoss", "WorkingModel",
    "adaptive_weights", "build_candidate_set", "chi2_quantile",
    "confset_Abeta", "confset_beta_j", "confset_case_prob", "ebic_score",
    "fit_adaptive_l1", "fit_quasi_mle", "fit_ridge_cv", "gen_design",
    "gen_response", "inv_logit", "l1_logistic_path", "link_logit",
    "loglik", "mean_function", "model_confidence_set", "nuclear_stat",
    "path_model_selector", "population_targets", "profile_nuclear",
    "rank_factorize", "realized_working_noise", "recovery_loss",
    "sandwich_cov", "sim_design", "simulate_selector_distribution",
    "substream", "wald_stat",
]
