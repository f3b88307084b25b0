"""Ordered probit with fixed half-integer thresholds.

A latent normal response N(mu, sigma^2) is rounded to the nearest score and
clipped to {1, ..., M}: category s collects (s - 0.5, s + 0.5], with the two
end categories absorbing the tails.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .estimation import CountSample, _as_sample, _grid_argmax

__all__ = [
    "ProbitParams",
    "ProbitGrid",
    "ProbitFit",
    "probit_logpmf_array",
    "probit_pmf",
    "probit_induced_moments",
    "probit_mle_grid",
    "fit_probit_counts",
]


@dataclass(frozen=True)
class ProbitParams:
    mu: float
    sigma: float
    m: int = 5

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"m must be an integer >= 3, got {self.m!r}")
        if not (self.sigma > 0.0) or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")
        object.__setattr__(self, "m", int(self.m))


def _log_interval(lo, hi):
    """log(Phi(hi) - Phi(lo)) without cancellation in either tail."""
    upper_side = lo > 0.0
    # mirror intervals in the right half so both ends sit in the left tail
    a = np.where(upper_side, -hi, lo)
    b = np.where(upper_side, -lo, hi)
    log_a = log_ndtr(a)
    log_b = log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_b + np.log1p(-np.exp(log_a - log_b))
    return np.where(np.isneginf(log_a), log_b, out)


def probit_logpmf_array(mu, sigma, m: int = 5) -> np.ndarray:
    """log P(U = s), s = 1..m, broadcast over ``mu`` and ``sigma``."""
    mu, sigma = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                    np.asarray(sigma, dtype=float))
    cuts = np.arange(1, m, dtype=float) + 0.5
    z = (cuts - mu[..., None]) / sigma[..., None]
    inf = np.full(mu.shape + (1,), np.inf)
    lo = np.concatenate([-inf, z], axis=-1)
    hi = np.concatenate([z, inf], axis=-1)
    return _log_interval(lo, hi)


def probit_pmf(params: ProbitParams) -> np.ndarray:
    """Category probabilities of the discretised, clipped normal."""
    return np.exp(probit_logpmf_array(params.mu, params.sigma, params.m))


def probit_induced_moments(params: ProbitParams) -> tuple[float, float]:
    """Mean and variance of the observed score U (not of the latent normal)."""
    p = probit_pmf(params)
    k = np.arange(1, params.m + 1)
    mean = float(p @ k)
    return mean, float(p @ (k - mean) ** 2)


@dataclass(frozen=True)
class ProbitGrid:
    """Search box for (mu, sigma); ``mu_max`` defaults to m + 1."""

    mu_min: float = 0.0
    mu_max: float | None = None
    mu_step: float = 0.01
    sigma_min: float = 0.01
    sigma_max: float = 5.0
    sigma_step: float = 0.01

    def __post_init__(self):
        if self.mu_step <= 0 or self.sigma_step <= 0:
            raise ValueError("grid steps must be positive")
        if self.sigma_min <= 0 or self.sigma_max < self.sigma_min:
            raise ValueError("need 0 < sigma_min <= sigma_max")
        if self.mu_max is not None and self.mu_max < self.mu_min:
            raise ValueError("need mu_min <= mu_max")

    def axes(self, m: int):
        mu_max = m + 1.0 if self.mu_max is None else self.mu_max
        n_mu = int(math.floor((mu_max - self.mu_min) / self.mu_step + 1e-9))
        n_sigma = int(math.floor((self.sigma_max - self.sigma_min) / self.sigma_step + 1e-9))
        mu = np.round(self.mu_min + np.arange(n_mu + 1) * self.mu_step, 10)
        sigma = np.round(self.sigma_min + np.arange(n_sigma + 1) * self.sigma_step, 10)
        return mu, sigma


@dataclass(frozen=True)
class ProbitFit:
    params: ProbitParams
    log_likelihood: float
    info: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"mu": self.params.mu, "sigma": self.params.sigma, "m": self.params.m,
                "log_likelihood": self.log_likelihood, "method": "probit-grid", **self.info}


@functools.lru_cache(maxsize=8)
def _probit_table(m: int, grid: ProbitGrid):
    mu, sigma = grid.axes(m)
    mu_grid, sigma_grid = np.meshgrid(mu, sigma, indexing="ij")
    mu_flat, sigma_flat = mu_grid.ravel(), sigma_grid.ravel()
    logp = probit_logpmf_array(mu_flat, sigma_flat, m)
    logp = np.maximum(logp, -1e250)
    for arr in (mu_flat, sigma_flat, logp):
        arr.setflags(write=False)
    return mu_flat, sigma_flat, logp


def fit_probit_counts(counts, m: int = 5, grid: ProbitGrid | None = None):
    """Grid MLE of (mu, sigma) for each row of an (R, m) count array.

    Returns ``(mu, sigma, probs)``. Ties go to the smallest mu, then the
    smallest sigma.
    """
    grid = grid or ProbitGrid()
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    mu_flat, sigma_flat, logp = _probit_table(m, grid)
    uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
    idx = _grid_argmax(uniq, logp)[inverse.ravel()]
    return mu_flat[idx], sigma_flat[idx], np.exp(logp[idx])


def probit_log_likelihood(params: ProbitParams, sample: CountSample) -> float:
    sample = _as_sample(sample)
    logp = probit_logpmf_array(params.mu, params.sigma, params.m)
    counts = sample.array
    occupied = counts > 0
    return float(counts[occupied] @ logp[occupied])


def probit_mle_grid(sample: CountSample, grid: ProbitGrid | None = None) -> ProbitFit:
    """Maximum-likelihood (mu, sigma) over a bounded grid.

    The latent parameters are unbounded, so the search box must be finite;
    see :class:`ProbitGrid` for the default.
    """
    sample = _as_sample(sample)
    grid = grid or ProbitGrid()
    mu, sigma, _ = fit_probit_counts(np.array([sample.counts]), sample.m, grid)
    params = ProbitParams(float(mu[0]), float(sigma[0]), sample.m)
    return ProbitFit(params, probit_log_likelihood(params, sample),
                     {"mu_step": grid.mu_step, "sigma_step": grid.sigma_step})
