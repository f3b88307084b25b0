"""Bootstrapped G-test of goodness of fit and P-P plot data for p-values."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import binom, norm

from .estimation import (CountSample, FitResult, GridConfig, _as_sample, fit_counts,
                         mle_constrained, mle_grid)
from .probit import ProbitFit, ProbitGrid, fit_probit_counts, probit_mle_grid, probit_pmf
from .distribution import pmf

__all__ = [
    "Model",
    "GofResult",
    "g_statistic",
    "g_statistics",
    "bootstrap_g_test",
    "replicate_rngs",
    "seed_sequence",
    "child_stream",
    "PPPlotData",
    "pp_plot_data",
]


class Model(str, Enum):
    GSD = "gsd"
    PROBIT = "probit"


@dataclass(frozen=True)
class GofResult:
    t_statistic: float
    p_value: float
    mc: int
    fitted: FitResult | ProbitFit
    estimator: str

    def to_dict(self) -> dict:
        return {"t_statistic": self.t_statistic, "p_value": self.p_value, "mc": self.mc,
                "estimator": self.estimator, "fitted": self.fitted.to_dict()}


def g_statistics(counts, probs) -> np.ndarray:
    """Row-wise T = sum n_k log(n_k / (n p_k)) for (R, m) arrays.

    Empty cells contribute nothing; an occupied cell with p_k = 0 makes the
    row +inf.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n = counts.sum(axis=1, keepdims=True)
    occupied = counts > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(occupied, counts * np.log(counts / (n * probs)), 0.0)
    return terms.sum(axis=1)


def g_statistic(sample: CountSample, fitted) -> float:
    """G statistic of a sample against fitted probabilities.

    Returns ``inf`` when an observed category has fitted probability zero.
    """
    sample = _as_sample(sample)
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (sample.m,):
        raise ValueError(f"fitted must have {sample.m} entries")
    return float(g_statistics(sample.array, fitted)[0])


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None or an existing SeedSequence."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def child_stream(root: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """The stream at position ``key`` below ``root``, independent of call order."""
    return np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + tuple(key))


def replicate_rngs(seed, count: int) -> list[np.random.Generator]:
    """One independent generator per replicate, derived from (seed, index).

    Replicate r always gets the same stream for a given seed, whatever the
    number or order of replicates actually drawn.
    """
    root = seed_sequence(seed)
    return [np.random.default_rng(child_stream(root, r)) for r in range(count)]


def _fit(sample, model, estimator, grid):
    """Outer fit: (fit result, fitted probabilities, batch refit function)."""
    if model is Model.PROBIT:
        pgrid = grid if isinstance(grid, ProbitGrid) else ProbitGrid()
        fit = probit_mle_grid(sample, pgrid)

        def refit(counts):
            return fit_probit_counts(counts, sample.m, pgrid)[2]

        return fit, probit_pmf(fit.params), refit
    ggrid = grid if isinstance(grid, GridConfig) else GridConfig()
    constrained = estimator == "constrained"
    fit = mle_constrained(sample, ggrid) if constrained else mle_grid(sample, ggrid)

    def refit(counts):
        return fit_counts(counts, sample.m, ggrid, constrained=constrained)[2]

    return fit, pmf(fit.params), refit


def bootstrap_g_test(sample: CountSample, model: Model | str = Model.GSD, mc: int = 10_000,
                     seed=None, *, estimator: str = "constrained",
                     grid: GridConfig | ProbitGrid | None = None) -> GofResult:
    """Parametric-bootstrap p-value of the G statistic.

    The model is fitted by grid MLE (for the GSD, the constrained estimator
    by default; ``estimator="grid"`` uses the plain one). ``mc`` samples of
    the same size are drawn from the fitted probabilities and refitted with
    the same estimator; the p-value is the fraction of replicate statistics
    at least as large as the observed one.
    """
    sample = _as_sample(sample)
    model = Model(model)
    if estimator not in ("constrained", "grid"):
        raise ValueError(f"estimator must be 'constrained' or 'grid', got {estimator!r}")
    if int(mc) != mc or mc < 1:
        raise ValueError(f"mc must be a positive integer, got {mc!r}")
    if model is Model.PROBIT:
        estimator = "grid"
    fit, fitted_pmf, refit = _fit(sample, model, estimator, grid)
    t_obs = g_statistic(sample, fitted_pmf)
    draws = np.array([rng.multinomial(sample.n, fitted_pmf)
                      for rng in replicate_rngs(seed, int(mc))])
    t_rep = g_statistics(draws, refit(draws))
    exceed = int(np.count_nonzero(t_rep >= t_obs))
    return GofResult(t_obs, exceed / int(mc), int(mc), fit, estimator)


@dataclass(frozen=True)
class PPPlotData:
    """Empirical CDF of p-values on a grid, with the null upper bound."""

    x: np.ndarray
    ecdf: np.ndarray
    bound: np.ndarray
    bound_type: str

    @property
    def exceeds(self) -> np.ndarray:
        return self.ecdf > self.bound

    @property
    def fraction_exceeding(self) -> float:
        return float(np.mean(self.exceeds))

    def to_rows(self):
        return zip(self.x.tolist(), self.ecdf.tolist(), self.bound.tolist())


def pp_plot_data(p_values, alpha: float = 0.05, n_points: int = 101,
                 bound: str = "binomial") -> PPPlotData:
    """P-P curve of p-values against the uniform null, with a one-sided bound.

    With N p-values, N * ecdf(x) is Binomial(N, x) under a uniform null.
    ``bound="binomial"`` takes its pointwise (1 - alpha) quantile divided by
    N; ``bound="normal"`` uses the normal approximation
    x + z_{1-alpha} sqrt(x (1 - x) / N).
    """
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("p_values must be nonempty")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    x = np.linspace(0.0, 1.0, n_points)
    ecdf = np.searchsorted(np.sort(p), x, side="right") / p.size
    if bound == "binomial":
        upper = binom.ppf(1.0 - alpha, p.size, x) / p.size
    elif bound == "normal":
        upper = np.minimum(x + norm.ppf(1.0 - alpha) * np.sqrt(x * (1.0 - x) / p.size), 1.0)
    else:
        raise ValueError(f"unknown bound type {bound!r}")
    return PPPlotData(x, ecdf, np.asarray(upper, dtype=float), bound)

