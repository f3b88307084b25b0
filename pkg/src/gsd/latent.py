"""Representation of a GSD score as one plus a sum of M-1 zero-one variables.

Underdispersed case (``rho >= C``): with probability ``d`` every indicator
follows the deterministic "triangular" pattern ``X_i``; otherwise they are
iid Bernoulli((psi-1)/(M-1)) variables ``Y_i``. The indicators share the
mixing draw, so they are not independent; an independent (Poisson-binomial)
reading of the same marginals gives a different distribution.

Overdispersed case (``rho < C``): conditionally on ``B ~ Beta(alpha, beta)``
the indicators are iid Bernoulli(B), so ``U - 1`` is beta-binomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .distribution import GsdParams, INTEGER_TOL, variance_envelope

__all__ = [
    "LatentSpec",
    "latent_decomposition",
    "phi",
    "validate_general_phi",
    "beta_binomial_pmf",
    "poisson_binomial_pmf",
]

UNDERDISPERSED = "underdispersed"
OVERDISPERSED = "overdispersed"


def beta_binomial_pmf(trials: int, alpha: float, beta: float) -> np.ndarray:
    """BB(trials, alpha, beta) probabilities of 0..trials via log-gamma."""
    k = np.arange(trials + 1)
    log_comb = gammaln(trials + 1) - gammaln(k + 1) - gammaln(trials - k + 1)
    return np.exp(log_comb + betaln(k + alpha, trials - k + beta) - betaln(alpha, beta))


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Distribution of a sum of independent Bernoulli(probs[i]) variables."""
    dist = np.array([1.0])
    for p in probs:
        dist = np.convolve(dist, [1.0 - p, p])
    return dist


@dataclass(frozen=True)
class LatentSpec:
    """Latent zero-one construction of a GSD.

    For the underdispersed regime ``mix_weight``, ``x_probs`` and ``y_prob``
    are set; for the overdispersed one ``alpha`` and ``beta``.
    """

    params: GsdParams
    regime: str
    mix_weight: float | None = None
    x_probs: tuple[float, ...] | None = None
    y_prob: float | None = None
    alpha: float | None = None
    beta: float | None = None

    @property
    def phi_values(self) -> np.ndarray:
        """Marginal success probabilities P(Z_i = 1), i = 1..M-1."""
        if self.regime == UNDERDISPERSED:
            d = self.mix_weight
            return d * np.asarray(self.x_probs) + (1.0 - d) * self.y_prob
        mean = self.alpha / (self.alpha + self.beta)
        return np.full(self.params.m - 1, mean)

    def pmf(self) -> np.ndarray:
        """Distribution of 1 + sum(Z_i) computed from the latent pieces."""
        trials = self.params.m - 1
        if self.regime == OVERDISPERSED:
            return beta_binomial_pmf(trials, self.alpha, self.beta)
        x_sum = poisson_binomial_pmf(self.x_probs)
        y_sum = poisson_binomial_pmf([self.y_prob] * trials)
        d = self.mix_weight
        return d * x_sum + (1.0 - d) * y_sum

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Draw ``n`` scores by simulating the indicators directly."""
        rng = np.random.default_rng(seed)
        trials = self.params.m - 1
        if self.regime == OVERDISPERSED:
            b = rng.beta(self.alpha, self.beta, size=n)
            z = rng.random((n, trials)) < b[:, None]
        else:
            mix = rng.random(n) < self.mix_weight
            x = rng.random((n, trials)) < np.asarray(self.x_probs)
            y = rng.random((n, trials)) < self.y_prob
            z = np.where(mix[:, None], x, y)
        return 1 + z.sum(axis=1)


def _triangular_indicators(psi, m):
    """P(X_i = 1) for i = 1..m-1: ones, one fractional entry, then zeros."""
    nearest = round(psi)
    if abs(psi - nearest) < INTEGER_TOL:
        lo = hi = nearest
    else:
        lo, hi = math.floor(psi), math.ceil(psi)
    probs = []
    for i in range(1, m):
        if i <= lo - 1 and i != hi - 1:
            probs.append(1.0)
        elif i == hi - 1:
            probs.append(psi + 1.0 - hi)
        else:
            probs.append(0.0)
    return tuple(probs)


def latent_decomposition(params: GsdParams) -> LatentSpec:
    """Latent zero-one construction matching ``pmf(params)``."""
    psi, rho, m = params.psi, params.rho, params.m
    if abs(psi - 1.0) < INTEGER_TOL or abs(psi - m) < INTEGER_TOL:
        raise ValueError("psi at the scale edge gives a degenerate point mass")
    c = variance_envelope(psi, m).c
    if rho >= c:
        return LatentSpec(
            params=params,
            regime=UNDERDISPERSED,
            mix_weight=(rho - c) / (1.0 - c),
            x_probs=_triangular_indicators(psi, m),
            y_prob=(psi - 1.0) / (m - 1),
        )
    if rho == 0.0:
        raise ValueError("beta parameters are undefined at rho = 0")
    scale = rho / ((m - 1) * (c - rho))
    return LatentSpec(
        params=params,
        regime=OVERDISPERSED,
        alpha=(psi - 1.0) * scale,
        beta=(m - psi) * scale,
    )


def phi(params: GsdParams, x: float) -> float:
    """Piecewise-linear success-probability profile of the underdispersed case.

    Constant for ``x <= psi - 1``, linear on ``(psi - 1, psi]`` and constant
    again beyond ``psi``.
    """
    psi, rho, m = params.psi, params.rho, params.m
    c = variance_envelope(psi, m).c
    if rho < c:
        raise ValueError(f"phi needs rho >= C(psi) = {c:.6g}, got rho = {rho}")
    if not (1.0 <= x <= m - 1):
        raise ValueError(f"x must lie in [1, {m - 1}], got {x!r}")
    if c == 1.0:
        # point mass at an edge: all indicators 0 (psi = 1) or 1 (psi = m)
        return 1.0 if psi == m else 0.0
    d = (rho - c) / (1.0 - c)
    base = (1.0 - rho) * (psi - 1.0) / ((1.0 - c) * (m - 1))
    if x <= psi - 1.0:
        return d + base
    if x <= psi:
        return d * (psi - x) + base
    return base


def validate_general_phi(phi_values, psi: float, rho: float, tol: float = 1e-9) -> bool:
    """Check a success-probability profile against the general-class conditions.

    ``phi_values`` holds phi(1), ..., phi(M-1). The profile qualifies when every
    value lies in [0, 1], the values sum to ``psi - 1`` and their squares sum
    to ``psi - 1 - (1 - rho) V_max - rho V_min``.
    """
    values = np.asarray(phi_values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("phi_values must be a 1-d sequence of length M-1 >= 2")
    m = values.size + 1
    if not (1.0 <= psi <= m):
        raise ValueError(f"psi must lie in [1, {m}] for {values.size} values")
    env = variance_envelope(psi, m)
    if np.any(values < -tol) or np.any(values > 1.0 + tol):
        return False
    if abs(values.sum() - (psi - 1.0)) > tol:
        return False
    target = psi - 1.0 - (1.0 - rho) * env.v_max - rho * env.v_min
    return bool(abs(np.sum(values ** 2) - target) <= tol)
