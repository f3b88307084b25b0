"""Generalised Score Distribution on the finite support {1, ..., M}.

A GSD is parameterised by its mean ``psi`` in [1, M] and a confidence
parameter ``rho`` in [0, 1] that is linear in the variance: ``rho = 1`` gives
the smallest variance achievable at that mean, ``rho = 0`` the largest.
Below the binomial threshold ``C(psi)`` the distribution is a reparameterised
beta-binomial; above it, a mixture of the shifted binomial and the
minimal-variance distribution.

All probability computations go through :func:`pmf_array`, which only uses
``+ - * /`` so that vectorised and scalar evaluations agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "GsdParams",
    "VarianceEnvelope",
    "variance_envelope",
    "pmf",
    "pmf_array",
    "moments",
    "cdf",
    "quantile",
    "sample",
    "binomial_pmf",
    "INTEGER_TOL",
]

# psi closer than this to an integer is treated as that integer.
INTEGER_TOL = 1e-12


@dataclass(frozen=True)
class GsdParams:
    """Parameters of a GSD: mean ``psi``, confidence ``rho``, scale size ``m``."""

    psi: float
    rho: float
    m: int = 5

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"m must be an integer >= 3, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        psi, rho = float(self.psi), float(self.rho)
        if not (1.0 <= psi <= self.m):
            raise ValueError(f"psi must lie in [1, {self.m}], got {psi!r}")
        if not (0.0 <= rho <= 1.0):
            raise ValueError(f"rho must lie in [0, 1], got {rho!r}")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "rho", rho)

    @property
    def envelope(self) -> "VarianceEnvelope":
        return variance_envelope(self.psi, self.m)

    @property
    def overdispersed(self) -> bool:
        """True when the beta-binomial branch (``rho < C(psi)``) applies."""
        return self.rho < self.envelope.c


class VarianceEnvelope(NamedTuple):
    v_min: float
    v_max: float
    v_bin: float
    c: float


def _check_scale(psi, m):
    if int(m) != m or m < 3:
        raise ValueError(f"m must be an integer >= 3, got {m!r}")
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 1.0) or np.any(psi > m) or np.any(np.isnan(psi)):
        raise ValueError(f"psi must lie in [1, {m}]")
    return psi


def _envelope_arrays(psi, m):
    """Vectorised V_min, V_max, C and the integer/edge masks."""
    nearest = np.round(psi)
    is_int = np.abs(psi - nearest) < INTEGER_TOL
    lo = np.where(is_int, nearest, np.floor(psi))
    hi = np.where(is_int, nearest, np.ceil(psi))
    v_min = np.where(is_int, 0.0, (hi - psi) * (psi - lo))
    v_max = (psi - 1.0) * (m - psi)
    edge = is_int & ((nearest == 1.0) | (nearest == m))
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (m - 2.0) / (m - 1.0) * v_max / (v_max - v_min)
    c = np.where(edge, 1.0, c)
    return v_min, v_max, c, is_int, lo, hi, edge


def variance_envelope(psi: float, m: int = 5) -> VarianceEnvelope:
    """Minimal, maximal and binomial variance at mean ``psi``, and ``C(psi)``.

    ``C(psi)`` is the confidence value at which the GSD is exactly the shifted
    binomial. At ``psi`` in {1, m} it is 0/0 and is set to 1, its one-sided
    limit.
    """
    psi_arr = _check_scale(psi, m)
    if psi_arr.ndim:
        raise ValueError("psi must be a scalar")
    v_min, v_max, c, *_ = _envelope_arrays(psi_arr, m)
    v_min, v_max, c = float(v_min), float(v_max), float(c)
    return VarianceEnvelope(v_min, v_max, v_max / (m - 1), c)


def _powers(x, n):
    """Columns x**0 ... x**n by repeated multiplication (deterministic)."""
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    for j in range(1, n + 1):
        out[..., j] = out[..., j - 1] * x
    return out


def _binom_coefs(m):
    return np.array([math.comb(m - 1, k) for k in range(m)], dtype=float)


def binomial_pmf(psi, m):
    """Shifted Binomial(m-1, (psi-1)/(m-1)) probabilities of 1..m, shape (..., m)."""
    psi = np.asarray(psi, dtype=float)
    p = (psi - 1.0) / (m - 1)
    q = (m - psi) / (m - 1)
    pp = _powers(p, m - 1)
    qp = _powers(q, m - 1)
    return _binom_coefs(m) * pp * qp[..., ::-1]


def _triangular(psi, m):
    k = np.arange(1, m + 1, dtype=float)
    return np.maximum(1.0 - np.abs(k - psi[..., None]), 0.0)


def _beta_binomial_products(psi, rho, c, m):
    """Overdispersed branch evaluated as raw products (requires rho > 0).

    The leading factor rho is cancelled by hand, so tiny rho cannot
    underflow the denominator into 0/0.
    """
    t = c - rho
    a = (psi - 1.0) * rho / (m - 1)
    b = (m - psi) * rho / (m - 1)
    # category-major layout keeps every update contiguous
    lower = np.empty((m,) + psi.shape)  # prod_{i=0}^{k-2} (a + i t), first factor / rho
    upper = np.empty((m,) + psi.shape)  # prod_{j=0}^{m-k-1} (b + j t), first factor / rho
    lower[0] = 1.0
    upper[m - 1] = 1.0
    lower[1] = (psi - 1.0) / (m - 1)
    upper[m - 2] = (m - psi) / (m - 1)
    for k in range(2, m):
        lower[k] = lower[k - 1] * (a + (k - 1) * t)
        upper[m - 1 - k] = upper[m - k] * (b + (k - 1) * t)
    denom = np.ones_like(psi)  # prod_{i=1}^{m-2} (rho + i t)
    for i in range(1, m - 1):
        denom = denom * (rho + i * t)
    # interior categories carry both first factors, so one rho survives
    lower[1:m - 1] *= rho
    out = _binom_coefs(m)[:, None] * lower.reshape(m, -1) * upper.reshape(m, -1) / denom.ravel()
    return np.moveaxis(out.reshape((m,) + psi.shape), 0, -1)


def pmf_array(psi, rho, m: int = 5) -> np.ndarray:
    """GSD probabilities for arrays of ``psi`` and ``rho``.

    ``psi`` and ``rho`` broadcast against each other; the result has shape
    ``broadcast_shape + (m,)``. Inputs are assumed valid.
    """
    psi, rho = np.broadcast_arrays(np.asarray(psi, dtype=float),
                                   np.asarray(rho, dtype=float))
    psi = np.ascontiguousarray(psi)
    rho = np.ascontiguousarray(rho)
    _, _, c, _, _, _, edge = _envelope_arrays(psi, m)
    out = np.empty(psi.shape + (m,))

    under = ~edge & (rho >= c)
    if np.any(under):
        ps, rs, cs = psi[under], rho[under], c[under]
        d = (rs - cs) / (1.0 - cs)
        w = (1.0 - rs) / (1.0 - cs)
        out[under] = (d[:, None] * _triangular(ps, m)
                      + w[:, None] * binomial_pmf(ps, m))

    two_point = ~edge & (rho < c) & (rho == 0.0)
    if np.any(two_point):
        ps = psi[two_point]
        block = np.zeros((ps.size, m))
        block[:, 0] = (m - ps) / (m - 1)
        block[:, m - 1] = (ps - 1.0) / (m - 1)
        out[two_point] = block

    over = ~edge & (rho < c) & (rho > 0.0)
    if np.any(over):
        out[over] = _beta_binomial_products(psi[over], rho[over], c[over], m)

    if np.any(edge):
        block = np.zeros((int(edge.sum()), m))
        top = np.round(psi[edge]) == m
        block[~top, 0] = 1.0
        block[top, m - 1] = 1.0
        out[edge] = block
    return out


def pmf(params: GsdParams) -> np.ndarray:
    """Probabilities P(U = 1), ..., P(U = m) as a length-m array."""
    return pmf_array(np.array([params.psi]), np.array([params.rho]), params.m)[0]


def moments(params: GsdParams) -> tuple[float, float]:
    """Mean and variance; the mean is ``psi`` and the variance interpolates
    linearly between ``V_max`` (rho = 0) and ``V_min`` (rho = 1)."""
    env = params.envelope
    return params.psi, params.rho * env.v_min + (1.0 - params.rho) * env.v_max


def _cdf_table(params):
    table = np.cumsum(pmf(params))
    table[-1] = 1.0
    return table


def cdf(params: GsdParams, k: int) -> float:
    """P(U <= k) for k in {1, ..., m}."""
    if int(k) != k or not (1 <= k <= params.m):
        raise ValueError(f"k must be an integer in [1, {params.m}], got {k!r}")
    return float(_cdf_table(params)[int(k) - 1])


def quantile(params: GsdParams, u: float) -> int:
    """Generalised inverse of the CDF: the smallest k with cdf(k) >= u."""
    if not (0.0 <= u <= 1.0):
        raise ValueError(f"u must lie in [0, 1], got {u!r}")
    return int(np.searchsorted(_cdf_table(params), u, side="left")) + 1


def sample(params: GsdParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` scores by inverse-CDF sampling.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`; equal
    seeds give equal draws.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    # u in (0, 1] so that a zero-probability first category is never hit
    u = 1.0 - rng.random(int(n))
    return np.searchsorted(_cdf_table(params), u, side="left") + 1
