"""Estimators for GSD parameters from category counts.

Four estimators are provided: the method of moments, exhaustive search over
a (psi, rho) grid, projected gradient ascent on the log-likelihood, and a
grid search restricted to distributions leaving at least ``1/n`` probability
outside the two most likely categories (no empty-cell fits).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .distribution import (
    GsdParams,
    INTEGER_TOL,
    _envelope_arrays,
    _powers,
    _binom_coefs,
    _triangular,
    binomial_pmf,
    pmf,
    pmf_array,
    variance_envelope,
)

__all__ = [
    "CountSample",
    "FitResult",
    "GridConfig",
    "Method",
    "NonDifferentiableError",
    "moments_estimate",
    "log_likelihood",
    "log_likelihood_branch_formula",
    "log_likelihood_gradient",
    "logpmf_gradient_array",
    "mle_grid",
    "mle_gradient",
    "mle_constrained",
    "p_max",
    "epmf",
    "modified_epmf",
    "fit_counts",
]


class NonDifferentiableError(ValueError):
    """The log-likelihood has a kink (integer psi or rho = C(psi)) here."""


class Method(str, Enum):
    MOMENTS = "moments"
    GRID = "grid"
    GRADIENT = "gradient"
    CONSTRAINED_GRID = "constrained"


@dataclass(frozen=True)
class CountSample:
    """Numbers of responses in each category 1..m."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in np.asarray(self.counts).ravel())
        if len(counts) < 3:
            raise ValueError("need at least 3 response categories")
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        if sum(counts) < 1:
            raise ValueError("sample is empty")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_scores(cls, scores, m: int = 5) -> "CountSample":
        scores = np.asarray(scores, dtype=int).ravel()
        if scores.size and (scores.min() < 1 or scores.max() > m):
            raise ValueError(f"scores must lie in 1..{m}")
        return cls(tuple(np.bincount(scores - 1, minlength=m)))

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)

    def mean(self) -> float:
        return float(self.array @ np.arange(1, self.m + 1)) / self.n

    def variance(self) -> float:
        """Biased (divide-by-n) sample variance."""
        k = np.arange(1, self.m + 1)
        return float(self.array @ (k - self.mean()) ** 2) / self.n


@dataclass(frozen=True)
class GridConfig:
    psi_step: float = 0.01
    rho_step: float = 0.01

    def __post_init__(self):
        for name in ("psi_step", "rho_step"):
            step = getattr(self, name)
            if not (0.0 < step <= 0.1):
                raise ValueError(f"{name} must lie in (0, 0.1], got {step!r}")


@dataclass(frozen=True)
class FitResult:
    params: GsdParams
    log_likelihood: float
    method: Method
    info: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "psi": self.params.psi,
            "rho": self.params.rho,
            "m": self.params.m,
            "log_likelihood": self.log_likelihood,
            "method": self.method.value,
            **self.info,
        }


def _as_sample(sample) -> CountSample:
    return sample if isinstance(sample, CountSample) else CountSample(tuple(sample))


def moments_estimate(sample: CountSample) -> GsdParams:
    """Method-of-moments estimate from the sample mean and biased variance."""
    sample = _as_sample(sample)
    m = sample.m
    psi = min(max(sample.mean(), 1.0), float(m))
    if psi - 1.0 < INTEGER_TOL or m - psi < INTEGER_TOL:
        return GsdParams(round(psi), 1.0, m)
    env = variance_envelope(psi, m)
    rho = (env.v_max - sample.variance()) / (env.v_max - env.v_min)
    return GsdParams(psi, min(max(rho, 0.0), 1.0), m)


def log_likelihood(params: GsdParams, sample: CountSample) -> float:
    """Sum of n_k log p_k; empty categories contribute nothing, and an
    occupied zero-probability category gives ``-inf``."""
    sample = _as_sample(sample)
    if sample.m != params.m:
        raise ValueError(f"sample has {sample.m} categories, params expect {params.m}")
    p = pmf(params)
    counts = sample.array
    occupied = counts > 0
    if np.any(p[occupied] == 0.0):
        return -math.inf
    return float(counts[occupied] @ np.log(p[occupied]))


def _derivative_pieces(psi, m):
    """C(psi), C'(psi) and the envelope terms at (non-integer) psi."""
    v_min, v_max, c, is_int, lo, hi, edge = _envelope_arrays(psi, m)
    dv_min = -2.0 * psi + lo + hi
    dv_max = -2.0 * psi + m + 1.0
    k_ratio = (m - 2.0) / (m - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dc = k_ratio * (v_max * dv_min - dv_max * v_min) / (v_max - v_min) ** 2
    return c, dc


def log_likelihood_branch_formula(params: GsdParams, sample: CountSample) -> float:
    """Log-likelihood written out per branch as sums of logarithms.

    Overdispersed branch: log-binomial coefficient plus log-sums of the
    rising-product factors. Underdispersed branch: log of the unnormalised
    mixture minus log(1 - C). Agrees with :func:`log_likelihood` but never
    forms the probabilities themselves.
    """
    sample = _as_sample(sample)
    psi, rho, m = params.psi, params.rho, params.m
    env = variance_envelope(psi, m)
    c = env.c
    counts = sample.array
    occupied = counts > 0
    if c == 1.0 or rho == 0.0:
        # point masses and the two-point law have no separate closed form
        return log_likelihood(params, sample)
    terms = np.empty(m)
    if rho < c:
        t = c - rho
        a = (psi - 1.0) * rho / (m - 1)
        b = (m - psi) * rho / (m - 1)
        log_denom = sum(math.log(rho + i * t) for i in range(m - 1))
        for k in range(1, m + 1):
            s = math.log(math.comb(m - 1, k - 1))
            s += sum(math.log(a + i * t) for i in range(k - 1))
            s += sum(math.log(b + i * t) for i in range(m - k))
            terms[k - 1] = s - log_denom
    else:
        tri = _triangular(np.array([psi]), m)[0]
        binom = binomial_pmf(np.array([psi]), m)[0]
        with np.errstate(divide="ignore"):
            terms = np.log((rho - c) * tri + (1.0 - rho) * binom) - math.log(1.0 - c)
    if np.any(np.isneginf(terms[occupied])):
        return -math.inf
    return float(counts[occupied] @ terms[occupied])


def logpmf_gradient_array(psi, rho, m: int = 5):
    """Partial derivatives of log p_k with respect to psi and rho.

    Vectorised over ``psi``/``rho`` (broadcast); returns two arrays of shape
    ``broadcast_shape + (m,)``. Valid for psi in (1, m) off the integers and
    rho > 0; at rho == C(psi) the underdispersed (right-hand) derivative is
    returned. Entries for zero-probability categories are ``nan``.
    """
    psi, rho = np.broadcast_arrays(np.asarray(psi, dtype=float),
                                   np.asarray(rho, dtype=float))
    psi = np.ascontiguousarray(psi)
    rho = np.ascontiguousarray(rho)
    c, dc = _derivative_pieces(psi, m)
    d_psi = np.full(psi.shape + (m,), np.nan)
    d_rho = np.full(psi.shape + (m,), np.nan)

    over = rho < c
    if np.any(over):
        ps, rs, cs, dcs = psi[over], rho[over], c[over], dc[over]
        t = cs - rs
        a = (ps - 1.0) * rs / (m - 1)
        b = (m - ps) * rs / (m - 1)
        n = ps.size
        # category-major layout keeps every update contiguous
        lower_psi = np.zeros((m, n))
        lower_rho = np.zeros((m, n))
        upper_psi = np.zeros((m, n))
        upper_rho = np.zeros((m, n))
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(1, m):
                i = k - 1
                lower_psi[k] = lower_psi[k - 1] + (rs / (m - 1) + i * dcs) / (a + i * t)
                lower_rho[k] = lower_rho[k - 1] + ((ps - 1.0) / (m - 1) - i) / (a + i * t)
                upper_psi[m - 1 - k] = upper_psi[m - k] + (-rs / (m - 1) + i * dcs) / (b + i * t)
                upper_rho[m - 1 - k] = upper_rho[m - k] + ((m - ps) / (m - 1) - i) / (b + i * t)
            denom_psi = np.zeros(n)
            denom_rho = np.zeros(n)
            for i in range(m - 1):
                denom_psi += i * dcs / (rs + i * t)
                denom_rho += (i - 1.0) / (rs + i * t)
            d_psi[over] = (lower_psi + upper_psi - denom_psi).T
            d_rho[over] = (lower_rho + upper_rho + denom_rho).T

    under = ~over
    if np.any(under):
        ps, rs, cs, dcs = psi[under], rho[under], c[under], dc[under]
        k = np.arange(1, m + 1, dtype=float)
        tri = _triangular(ps, m)
        p = (ps - 1.0) / (m - 1)
        q = (m - ps) / (m - 1)
        pp = _powers(p, m - 1)
        qp = _powers(q, m - 1)
        coefs = _binom_coefs(m)
        binom = coefs * pp * qp[:, ::-1]
        d_binom = np.zeros_like(binom)
        # (k-1) p^(k-2) q^(m-k) - (m-k) p^(k-1) q^(m-k-1), scaled by 1/(m-1)
        d_binom[:, 1:] += (k[1:] - 1.0) * pp[:, :-1] * qp[:, ::-1][:, 1:]
        d_binom[:, :-1] -= (m - k[:-1]) * pp[:, :-1] * qp[:, ::-1][:, 1:]
        d_binom *= coefs / (m - 1)
        x = ps[:, None]
        d_tri = (((k - 1.0 <= x) & (x <= k)).astype(float)
                 - ((k <= x) & (x <= k + 1.0)).astype(float))
        gap = (rs - cs)[:, None]
        num = gap * tri + (1.0 - rs)[:, None] * binom
        with np.errstate(divide="ignore", invalid="ignore"):
            dp = (gap * d_tri - dcs[:, None] * tri
                  + (1.0 - rs)[:, None] * d_binom) / num + (dcs / (1.0 - cs))[:, None]
            dr = (tri - binom) / num
        dp[num == 0.0] = np.nan
        dr[num == 0.0] = np.nan
        d_psi[under] = dp
        d_rho[under] = dr
    return d_psi, d_rho


def _gradient_unchecked(psi, rho, counts, m):
    d_psi, d_rho = logpmf_gradient_array(np.array([psi]), np.array([rho]), m)
    occupied = counts > 0
    return (float(counts[occupied] @ d_psi[0][occupied]),
            float(counts[occupied] @ d_rho[0][occupied]))


def log_likelihood_gradient(params: GsdParams, sample: CountSample) -> tuple[float, float]:
    """Analytic gradient (d/dpsi, d/drho) of the log-likelihood.

    Raises :class:`NonDifferentiableError` at integer psi, at rho == C(psi),
    at rho == 0 and at the scale edges, where the branch formulas do not
    apply.
    """
    sample = _as_sample(sample)
    psi, rho, m = params.psi, params.rho, params.m
    if abs(psi - round(psi)) < INTEGER_TOL:
        raise NonDifferentiableError(f"log-likelihood has a kink at integer psi = {psi}")
    c = variance_envelope(psi, m).c
    if rho == c:
        raise NonDifferentiableError(f"log-likelihood has a kink at rho = C(psi) = {c}")
    if rho == 0.0:
        raise NonDifferentiableError("gradient formulas are singular at rho = 0")
    return _gradient_unchecked(psi, rho, sample.array, m)


# ---------------------------------------------------------------------------
# grid search


@functools.lru_cache(maxsize=16)
def _grid_table(m: int, psi_step: float, rho_step: float):
    n_psi = int(math.floor((m - 1) / psi_step + 1e-9))
    n_rho = int(math.floor(1.0 / rho_step + 1e-9))
    psi_vals = np.round(1.0 + np.arange(n_psi + 1) * psi_step, 10)
    rho_vals = np.round(np.arange(n_rho + 1) * rho_step, 10)
    if psi_vals[-1] < m:
        psi_vals = np.append(psi_vals, float(m))
    if rho_vals[-1] < 1.0:
        rho_vals = np.append(rho_vals, 1.0)
    psi_grid, rho_grid = np.meshgrid(psi_vals, rho_vals, indexing="ij")
    psi_flat, rho_flat = psi_grid.ravel(), rho_grid.ravel()
    probs = pmf_array(psi_flat, rho_flat, m)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    # finite stand-in for log 0 so that 0 * log 0 vanishes inside matmul
    logp[probs == 0.0] = -1e250
    top2 = np.sort(probs, axis=1)[:, -2:]
    pmax = top2[:, 1] + top2[:, 0]
    for arr in (psi_flat, rho_flat, probs, logp, pmax):
        arr.setflags(write=False)
    return psi_flat, rho_flat, probs, logp, pmax


def _grid_argmax(counts: np.ndarray, logp: np.ndarray, chunk_cells: int = 2_000_000):
    """Row-wise argmax of counts @ logp.T; first index wins ties."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    chunk = max(1, chunk_cells // max(1, logp.shape[0]))
    out = np.empty(counts.shape[0], dtype=np.intp)
    for start in range(0, counts.shape[0], chunk):
        ll = counts[start:start + chunk] @ logp.T
        out[start:start + chunk] = np.argmax(ll, axis=1)
    return out


def fit_counts(counts, m: int = 5, grid: GridConfig | None = None,
               constrained: bool = False):
    """Grid MLE for many samples at once.

    ``counts`` is an (R, m) integer array. Returns ``(psi, rho, probs)`` with
    shapes (R,), (R,), (R, m). Identical rows are fitted once. With
    ``constrained`` the search keeps only grid points whose two largest
    probabilities sum to at most ``1 - 1/n`` (n per row).
    """
    grid = grid or GridConfig()
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if counts.shape[1] != m:
        raise ValueError(f"counts must have {m} columns")
    psi_flat, rho_flat, probs, logp, pmax = _grid_table(m, grid.psi_step, grid.rho_step)
    uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    idx = np.empty(uniq.shape[0], dtype=np.intp)
    if not constrained:
        idx[:] = _grid_argmax(uniq, logp)
    else:
        totals = uniq.sum(axis=1)
        for n in np.unique(totals):
            if n < 2:
                raise ValueError("the constrained estimator needs n >= 2")
            rows = totals == n
            feasible = np.flatnonzero(pmax <= 1.0 - 1.0 / n)
            assert feasible.size, "empty feasible set"
            idx[rows] = feasible[_grid_argmax(uniq[rows], logp[feasible])]
    idx = idx[inverse]
    return psi_flat[idx], rho_flat[idx], probs[idx]


def _fit_result(psi, rho, sample, method, info):
    params = GsdParams(float(psi), float(rho), sample.m)
    return FitResult(params, log_likelihood(params, sample), method, info)


def mle_grid(sample: CountSample, grid: GridConfig | None = None) -> FitResult:
    """Maximum-likelihood (psi, rho) over a regular grid.

    Ties go to the smallest psi, then the smallest rho.
    """
    sample = _as_sample(sample)
    grid = grid or GridConfig()
    psi, rho, _ = fit_counts(np.array([sample.counts]), sample.m, grid)
    return _fit_result(psi[0], rho[0], sample, Method.GRID,
                       {"psi_step": grid.psi_step, "rho_step": grid.rho_step})


def p_max(params: GsdParams) -> float:
    """Largest total probability of two distinct categories."""
    top2 = np.sort(pmf(params))[-2:]
    return float(top2[1] + top2[0])


def mle_constrained(sample: CountSample, grid: GridConfig | None = None) -> FitResult:
    """Grid MLE restricted to ``p_max <= 1 - 1/n``.

    Every fitted probability is then strictly inside (0, 1), so no observed
    or unobserved category is declared impossible or certain.
    """
    sample = _as_sample(sample)
    grid = grid or GridConfig()
    psi, rho, _ = fit_counts(np.array([sample.counts]), sample.m, grid, constrained=True)
    return _fit_result(psi[0], rho[0], sample, Method.CONSTRAINED_GRID,
                       {"psi_step": grid.psi_step, "rho_step": grid.rho_step,
                        "p_max_bound": 1.0 - 1.0 / sample.n})


# ---------------------------------------------------------------------------
# gradient ascent

_NUDGE = 1e-9


def _ascent_direction(psi, rho, counts, m):
    """Gradient at a nearby differentiable point (nudged off kinks)."""
    psi_e = min(max(psi, 1.0 + _NUDGE), m - _NUDGE)
    nearest = round(psi_e)
    if abs(psi_e - nearest) < _NUDGE:
        psi_e = nearest + _NUDGE if nearest < m else nearest - _NUDGE
    rho_e = max(rho, _NUDGE)
    g = np.array(_gradient_unchecked(psi_e, rho_e, counts, m))
    return np.where(np.isfinite(g), g, 0.0)


def _loglik_fast(psi, rho, counts, m, coefs):
    """Scalar log-likelihood in plain floats for the optimiser's inner loop."""
    nearest = round(psi)
    if abs(psi - nearest) < INTEGER_TOL:
        if nearest in (1, m):
            occupied = [k for k, n in enumerate(counts) if n]
            target = 0 if nearest == 1 else m - 1
            return 0.0 if occupied == [target] else -math.inf
        v_min = 0.0
    else:
        v_min = (math.ceil(psi) - psi) * (psi - math.floor(psi))
    v_max = (psi - 1.0) * (m - psi)
    c = (m - 2.0) / (m - 1.0) * v_max / (v_max - v_min)
    if rho >= c:
        d = (rho - c) / (1.0 - c)
        w = (1.0 - rho) / (1.0 - c)
        p = (psi - 1.0) / (m - 1)
        q = (m - psi) / (m - 1)
        probs = [d * max(1.0 - abs(k + 1 - psi), 0.0) + w * coefs[k] * p ** k * q ** (m - 1 - k)
                 for k in range(m)]
    elif rho == 0.0:
        probs = [0.0] * m
        probs[0] = (m - psi) / (m - 1)
        probs[m - 1] = (psi - 1.0) / (m - 1)
    else:
        t = c - rho
        a = (psi - 1.0) * rho / (m - 1)
        b = (m - psi) * rho / (m - 1)
        lower = [1.0] * m
        upper = [1.0] * m
        for k in range(1, m):
            lower[k] = lower[k - 1] * (a + (k - 1) * t)
            upper[m - 1 - k] = upper[m - k] * (b + (k - 1) * t)
        denom = 1.0
        for i in range(m - 1):
            denom *= rho + i * t
        probs = [coefs[k] * lower[k] * upper[k] / denom for k in range(m)]
    total = 0.0
    for n, p_k in zip(counts, probs):
        if n:
            if p_k <= 0.0:
                return -math.inf
            total += n * math.log(p_k)
    return total


def _ascend(x, objective, counts, m, step, tol, max_iter):
    """Projected gradient ascent from ``x``; returns (x, ll, iterations, converged)."""
    lower = np.array([1.0, 0.0])
    upper = np.array([float(m), 1.0])
    ll = objective(x)
    converged = False
    iterations = 0
    first_step = step
    for iterations in range(1, max_iter + 1):
        g = _ascent_direction(x[0], x[1], counts, m)
        candidates = (g, np.array([g[0], 0.0]), np.array([0.0, g[1]]))
        accepted = None
        for direction in candidates:
            size = float(np.hypot(*direction))
            if size == 0.0:
                continue
            s = first_step
            while s * size > 1e-15:
                trial = np.clip(x + s * direction, lower, upper)
                if np.array_equal(trial, x):
                    break
                trial_ll = objective(trial)
                if trial_ll > ll:
                    accepted = trial, trial_ll, s
                    break
                s *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            converged = True
            break
        moved = float(np.hypot(*(accepted[0] - x)))
        x, ll, taken = accepted
        first_step = min(2.0 * taken, 1e6)
        if moved < tol:
            converged = True
            break
    return x, ll, iterations, converged


def mle_gradient(sample: CountSample, init: GsdParams | None = None, *,
                 step: float = 0.1, tol: float = 1e-8, max_iter: int = 10_000,
                 grid_start: bool = True) -> FitResult:
    """Projected gradient ascent on [1, m] x [0, 1].

    Starts from ``init`` (default: the moments estimate). The likelihood can
    have a separate local maximum on each side of rho = C(psi), so with
    ``grid_start`` a second ascent starts from the default grid MLE and the
    better end point is kept (the first start wins ties).

    The first line search starts at ``step``; later ones start at twice the
    last accepted step. Each search halves until the log-likelihood
    increases; if the full gradient step never does, each coordinate is
    tried on its own. An ascent stops when an accepted move is shorter than
    ``tol``, when no improving move exists, or after ``max_iter``
    iterations. The returned log-likelihood is never below the one at
    ``init``.
    """
    sample = _as_sample(sample)
    m = sample.m
    counts = sample.array
    count_list = [int(v) for v in sample.counts]
    coefs = [float(v) for v in _binom_coefs(m)]
    start = init if init is not None else moments_estimate(sample)
    if start.m != m:
        raise ValueError("init and sample disagree on m")

    def objective(x):
        return _loglik_fast(float(x[0]), float(x[1]), count_list, m, coefs)

    starts = [np.array([start.psi, start.rho])]
    if grid_start:
        psi0, rho0, _ = fit_counts(np.array([sample.counts]), m)
        starts.append(np.array([psi0[0], rho0[0]]))
    best = None
    for x0 in starts:
        run = _ascend(x0, objective, counts, m, step, tol, max_iter)
        if best is None or run[1] > best[1]:
            best = run
    x, _, iterations, converged = best
    params = GsdParams(float(x[0]), float(x[1]), m)
    result_ll = log_likelihood(params, sample)
    start_ll = log_likelihood(start, sample)
    if result_ll < start_ll:
        # rounding differences between the fast and reference evaluations
        params, result_ll = start, start_ll
    return FitResult(params, result_ll, Method.GRADIENT,
                     {"iterations": iterations, "converged": converged,
                      "init_psi": start.psi, "init_rho": start.rho})


# ---------------------------------------------------------------------------
# empirical distributions


def epmf(sample: CountSample) -> np.ndarray:
    """Category frequencies n_k / n."""
    sample = _as_sample(sample)
    return sample.array / sample.n


def modified_epmf(sample: CountSample) -> np.ndarray:
    """Frequencies with half a count added to every category,
    (n_k + 0.5) / (n + m/2); all entries are strictly inside (0, 1)."""
    sample = _as_sample(sample)
    return (sample.array + 0.5) / (sample.n + sample.m / 2.0)
