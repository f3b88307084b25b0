"""Generalised Score Distribution (GSD) for ratings on a 1..M scale."""

__version__ = "0.1.0"

from .distribution import (GsdParams, VarianceEnvelope, binomial_pmf, cdf, moments, pmf,
                           pmf_array, quantile, sample, variance_envelope)
from .latent import LatentSpec, latent_decomposition, phi, validate_general_phi
from .estimation import (CountSample, FitResult, GridConfig, Method, NonDifferentiableError,
                         epmf, fit_counts, log_likelihood, log_likelihood_gradient,
                         mle_constrained, mle_gradient, mle_grid, modified_epmf,
                         moments_estimate, p_max)
from .probit import (ProbitFit, ProbitGrid, ProbitParams, probit_induced_moments,
                     probit_mle_grid, probit_pmf)
from .gof import GofResult, Model, PPPlotData, bootstrap_g_test, g_statistic, pp_plot_data
from .compare import CompareBatch, CompareResult, Variant, Verdict, compare_batch, compare_models
from .matrix import (MatrixFit, MatrixFitConfig, RatingMatrix, fit_matrix, rmsd_study_1d,
                     rmsd_study_matrix, simulate_matrix)

__all__ = [
    "GsdParams", "VarianceEnvelope", "binomial_pmf", "cdf", "moments", "pmf", "pmf_array",
    "quantile", "sample", "variance_envelope",
    "LatentSpec", "latent_decomposition", "phi", "validate_general_phi",
    "CountSample", "FitResult", "GridConfig", "Method", "NonDifferentiableError", "epmf",
    "fit_counts", "log_likelihood", "log_likelihood_gradient", "mle_constrained",
    "mle_gradient", "mle_grid", "modified_epmf", "moments_estimate", "p_max",
    "ProbitFit", "ProbitGrid", "ProbitParams", "probit_induced_moments", "probit_mle_grid",
    "probit_pmf",
    "GofResult", "Model", "PPPlotData", "bootstrap_g_test", "g_statistic", "pp_plot_data",
    "CompareBatch", "CompareResult", "Variant", "Verdict", "compare_batch", "compare_models",
    "MatrixFit", "MatrixFitConfig", "RatingMatrix", "fit_matrix", "rmsd_study_1d",
    "rmsd_study_matrix", "simulate_matrix",
]
