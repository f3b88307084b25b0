"""Rater-by-stimulus GSD model and estimation-accuracy studies.

Score ``U[i, j]`` of rater i for stimulus j follows GSD(psi_j, rho_i): each
stimulus has its own mean and each rater their own confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distribution import _envelope_arrays, pmf_array
from .estimation import GridConfig, fit_counts, logpmf_gradient_array
from .gof import child_stream, seed_sequence

__all__ = [
    "RatingMatrix",
    "MatrixFitConfig",
    "MatrixFit",
    "simulate_matrix",
    "random_matrix_params",
    "fit_matrix",
    "initial_estimates",
    "RmsdTable",
    "rmsd_study_1d",
    "rmsd_study_matrix",
    "matrix_errors",
]

MISSING = 0


@dataclass(frozen=True)
class RatingMatrix:
    """Scores of ``n_raters`` raters for ``n_stimuli`` stimuli; 0 marks a gap."""

    scores: np.ndarray
    m: int = 5

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.int64)
        if scores.ndim != 2 or scores.size == 0:
            raise ValueError("scores must be a nonempty 2-d array")
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"m must be an integer >= 3, got {self.m!r}")
        if np.any((scores < 0) | (scores > self.m)):
            raise ValueError(f"scores must be 0 (missing) or in 1..{self.m}")
        present = scores != MISSING
        if not present.any(axis=1).all():
            raise ValueError("every rater needs at least one score")
        if not present.any(axis=0).all():
            raise ValueError("every stimulus needs at least one score")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "m", int(self.m))

    @property
    def n_raters(self) -> int:
        return self.scores.shape[0]

    @property
    def n_stimuli(self) -> int:
        return self.scores.shape[1]

    @property
    def present(self) -> np.ndarray:
        return self.scores != MISSING

    def cells(self):
        """(rater index, stimulus index, score) arrays of the present entries."""
        raters, stimuli = np.nonzero(self.present)
        return raters, stimuli, self.scores[raters, stimuli]


def random_matrix_params(n_raters: int, n_stimuli: int, m: int = 5, seed=None):
    """psi_j ~ Uniform(1, m) and rho_i ~ Uniform(0, 1)."""
    rng = np.random.default_rng(seed)
    psi = rng.uniform(1.0, m, n_stimuli)
    rho = rng.uniform(0.0, 1.0, n_raters)
    return psi, rho


def simulate_matrix(psi, rho, m: int = 5, seed=None) -> RatingMatrix:
    """Full matrix with U[i, j] ~ GSD(psi[j], rho[i]) drawn independently."""
    psi = np.asarray(psi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if psi.ndim != 1 or rho.ndim != 1 or psi.size == 0 or rho.size == 0:
        raise ValueError("psi and rho must be nonempty 1-d sequences")
    if np.any((psi < 1.0) | (psi > m)) or np.any((rho < 0.0) | (rho > 1.0)):
        raise ValueError(f"need psi in [1, {m}] and rho in [0, 1]")
    rng = np.random.default_rng(seed)
    probs = pmf_array(psi[None, :], rho[:, None], m)
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    u = 1.0 - rng.random((rho.size, psi.size))
    scores = 1 + np.sum(cdf < u[..., None], axis=-1)
    return RatingMatrix(scores, m)


@dataclass(frozen=True)
class MatrixFitConfig:
    """Stopping rule and step settings of the block-coordinate ascent."""

    tol: float = 1e-8
    max_sweeps: int = 500
    initial_step: float = 0.1
    max_halvings: int = 20


@dataclass(frozen=True)
class MatrixFit:
    psi: np.ndarray
    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool = True
    history: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {"psi": self.psi.tolist(), "rho": self.rho.tolist(),
                "log_likelihood": self.log_likelihood, "iterations": self.iterations,
                "converged": self.converged}


def _cell_loglik(psi_cells, rho_cells, score_cells, m):
    probs = pmf_array(psi_cells, rho_cells, m)
    p = probs[np.arange(score_cells.size), score_cells - 1]
    with np.errstate(divide="ignore"):
        return np.log(p)


def _cell_gradient(psi_cells, rho_cells, score_cells, m, wrt):
    d_psi, d_rho = logpmf_gradient_array(psi_cells, rho_cells, m)
    d = d_psi if wrt == "psi" else d_rho
    g = d[np.arange(score_cells.size), score_cells - 1]
    return np.where(np.isfinite(g), g, 0.0)


def initial_estimates(ratings: RatingMatrix):
    """Moments-based start: column means for psi; for each rater, the mean
    over their scores of the confidence implied by the squared deviation
    from the column mean, clamped to [0, 1]."""
    m = ratings.m
    raters, stimuli, scores = ratings.cells()
    col_n = np.bincount(stimuli, minlength=ratings.n_stimuli)
    psi = np.bincount(stimuli, weights=scores, minlength=ratings.n_stimuli) / col_n
    psi = np.clip(psi, 1.0, m)
    v_min, v_max, *_ = _envelope_arrays(psi, m)
    span = (v_max - v_min)[stimuli]
    dev2 = (scores - psi[stimuli]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        cell_rho = np.where(span > 0, (v_max[stimuli] - dev2) / span, 1.0)
    cell_rho = np.clip(cell_rho, 0.0, 1.0)
    row_n = np.bincount(raters, minlength=ratings.n_raters)
    rho = np.bincount(raters, weights=cell_rho, minlength=ratings.n_raters) / row_n
    rho = np.clip(rho, 0.0, 1.0)
    # a start with an impossible observation cannot be improved by ascent;
    # move the offending raters into the interior where every score is possible
    ll = _cell_loglik(psi[stimuli], rho[raters], scores, m)
    bad = np.unique(raters[np.isneginf(ll)])
    rho[bad] = np.clip(rho[bad], 0.01, 0.99)
    return psi, rho


_NUDGE = 1e-9
_CURVATURE_STEP = 1e-5


def _block_step(x, lower, upper, objective, gradient, steps, max_halvings):
    """One safeguarded Newton step for every coordinate of a separable block.

    ``objective(x)`` and ``gradient(x)`` return per-coordinate sums. The
    ascent direction uses one-sided derivatives just above and below ``x`` so
    that coordinates sitting on a kink can still move to the better side.
    The curvature comes from a finite difference of the analytic derivative
    on that side; where it is not negative, a plain gradient step of the
    coordinate's current size ``steps`` is used instead. Trial points are
    projected onto [lower, upper] and halved until the objective improves;
    coordinates that never improve stay put.
    """
    current = objective(x)
    inner_lo, inner_hi = lower + _NUDGE, upper - _NUDGE
    g_up = gradient(np.clip(x + _NUDGE, inner_lo, inner_hi))
    g_down = gradient(np.clip(x - _NUDGE, inner_lo, inner_hi))
    up = g_up > 0
    slope = np.where(up, g_up, np.where(g_down < 0, g_down, 0.0))
    side = np.where(up, 1.0, -1.0)
    probe = np.clip(x + side * _CURVATURE_STEP, inner_lo, inner_hi)
    base = np.clip(x + side * _NUDGE, inner_lo, inner_hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        curvature = (gradient(probe) - slope) / (probe - base)
        newton = -slope / curvature
    newton_ok = np.isfinite(newton) & (curvature < 0)
    pending = (slope != 0.0) & ~((x >= upper) & (slope > 0)) & ~((x <= lower) & (slope < 0))

    def search(x, current, pending, move, halvings):
        improved_any = np.zeros_like(pending)
        for _ in range(halvings):
            if not pending.any():
                break
            trial = np.where(pending, np.clip(x + move, lower, upper), x)
            trial_obj = objective(trial, pending)
            improved = pending & (trial_obj > current)
            x = np.where(improved, trial, x)
            current = np.where(improved, trial_obj, current)
            improved_any |= improved
            pending = pending & ~improved
            move = np.where(pending, move * 0.5, move)
        return x, current, improved_any, move

    x, current, done, _ = search(x, current, pending & newton_ok,
                                 np.where(newton_ok, newton, 0.0), max_halvings // 2)
    # gradient steps for the rest, with per-coordinate step sizes that grow
    # after success and shrink after failure
    rest = pending & ~done
    x, current, improved, move = search(x, current, rest, steps * slope, max_halvings)
    with np.errstate(divide="ignore", invalid="ignore"):
        taken = np.abs(move / slope)
    steps[improved] = np.minimum(taken[improved] * 2.0, 1e3)
    failed = rest & ~improved
    steps[failed] = np.maximum(taken[failed], 1e-12)
    return x, current


def fit_matrix(ratings: RatingMatrix, config: MatrixFitConfig | None = None,
               init=None) -> MatrixFit:
    """Joint maximum likelihood of all psi_j and rho_i.

    Alternates between updating every psi_j with the rho_i fixed and every
    rho_i with the psi_j fixed; each update is a projected-gradient step with
    its own backtracking step size. Steps are accepted only when they raise
    the likelihood, so the joint log-likelihood never decreases. Stops when a
    full sweep gains less than ``config.tol`` or after ``config.max_sweeps``.
    """
    config = config or MatrixFitConfig()
    m = ratings.m
    raters, stimuli, scores = ratings.cells()
    n_r, n_s = ratings.n_raters, ratings.n_stimuli
    if init is None:
        psi, rho = initial_estimates(ratings)
    else:
        psi = np.array(init[0], dtype=float)
        rho = np.array(init[1], dtype=float)

    def joint(psi_, rho_):
        return float(np.sum(_cell_loglik(psi_[stimuli], rho_[raters], scores, m)))

    def block_sums(group, size, psi_of, rho_of, active):
        """Per-group log-likelihood, evaluated only on the active groups' cells."""
        cells = slice(None) if active is None else active[group]
        ll = _cell_loglik(psi_of[stimuli[cells]], rho_of[raters[cells]], scores[cells], m)
        return np.bincount(group[cells], ll, size)

    def psi_objective(p, active=None):
        return block_sums(stimuli, n_s, p, rho, active)

    def psi_gradient(p):
        # the derivative formulas are singular at rho = 0; use the limit from above
        g = _cell_gradient(p[stimuli], np.maximum(rho, _NUDGE)[raters], scores, m, "psi")
        return np.bincount(stimuli, g, n_s)

    def rho_objective(r, active=None):
        return block_sums(raters, n_r, psi, r, active)

    def rho_gradient(r):
        g = _cell_gradient(psi[stimuli], r[raters], scores, m, "rho")
        return np.bincount(raters, g, n_r)

    psi_steps = np.full(n_s, config.initial_step)
    rho_steps = np.full(n_r, config.initial_step)
    ll = joint(psi, rho)
    history = [ll]
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        psi, _ = _block_step(psi, 1.0, float(m), psi_objective, psi_gradient,
                             psi_steps, config.max_halvings)
        rho, _ = _block_step(rho, 0.0, 1.0, rho_objective, rho_gradient,
                             rho_steps, config.max_halvings)
        new_ll = joint(psi, rho)
        # every accepted move raises its group's sum; summing the groups in
        # another order can still move the total by a few ulps
        slack = 1e-12 * abs(ll) if math.isfinite(ll) else 0.0
        assert new_ll >= ll - slack or (math.isinf(ll) and math.isinf(new_ll)), \
            "joint log-likelihood decreased"
        gain = new_ll - ll if math.isfinite(ll) else math.inf
        ll = new_ll
        history.append(ll)
        if gain < config.tol:
            converged = True
            break
    return MatrixFit(psi, rho, ll, sweeps, converged, tuple(history))


# ---------------------------------------------------------------------------
# accuracy studies


@dataclass(frozen=True)
class RmsdTable:
    """Root-mean-square errors indexed by (sample size, first axis, second axis)."""

    sizes: tuple
    psi_values: np.ndarray
    rho_values: np.ndarray
    rmsd_psi: np.ndarray
    rmsd_rho: np.ndarray

    def rows(self):
        """Rows (n, psi, rho, rmsd_psi, rmsd_rho) for plotting."""
        for a, n in enumerate(self.sizes):
            for b, psi in enumerate(self.psi_values):
                for c, rho in enumerate(self.rho_values):
                    yield (n, float(psi), float(rho),
                           float(self.rmsd_psi[a, b, c]), float(self.rmsd_rho[a, b, c]))


def rmsd_study_1d(psi_values, rho_values, sizes=(12, 24, 50, 200), replicates: int = 1000,
                  m: int = 5, seed=None, grid: GridConfig | None = None) -> RmsdTable:
    """RMSD of grid-MLE estimates for single samples drawn at each (psi, rho).

    Cell (size a, psi b, rho c) uses a random stream derived from
    (seed, a, b, c).
    """
    psi_values = np.asarray(psi_values, dtype=float)
    rho_values = np.asarray(rho_values, dtype=float)
    sizes = tuple(int(n) for n in sizes)
    root = seed_sequence(seed)
    shape = (len(sizes), psi_values.size, rho_values.size)
    rmsd_psi = np.empty(shape)
    rmsd_rho = np.empty(shape)
    for a, n in enumerate(sizes):
        blocks = []
        for b, psi in enumerate(psi_values):
            probs = pmf_array(np.full(rho_values.size, psi), rho_values, m)
            for c in range(rho_values.size):
                rng = np.random.default_rng(child_stream(root, a, b, c))
                blocks.append(rng.multinomial(n, probs[c], size=replicates))
        psi_hat, rho_hat, _ = fit_counts(np.concatenate(blocks), m, grid)
        psi_hat = psi_hat.reshape(psi_values.size, rho_values.size, replicates)
        rho_hat = rho_hat.reshape(psi_values.size, rho_values.size, replicates)
        rmsd_psi[a] = np.sqrt(np.mean((psi_hat - psi_values[:, None, None]) ** 2, axis=-1))
        rmsd_rho[a] = np.sqrt(np.mean((rho_hat - rho_values[None, :, None]) ** 2, axis=-1))
    return RmsdTable(sizes, psi_values, rho_values, rmsd_psi, rmsd_rho)


def matrix_errors(size: int, replicates: int, m: int = 5, seed=None,
                  probe: tuple[str, float] | None = None,
                  config: MatrixFitConfig | None = None):
    """Absolute estimation errors of square ``size`` x ``size`` matrix fits.

    All parameters are drawn uniformly; with ``probe=("psi", v)`` the first
    stimulus has psi fixed at v, with ``probe=("rho", v)`` the first rater
    has rho fixed at v. Returns ``(psi_errors, rho_errors)`` of shapes
    (replicates, size) each; column 0 holds the probed parameter's errors.
    """
    root = seed_sequence(seed)
    psi_err = np.empty((replicates, size))
    rho_err = np.empty((replicates, size))
    for r in range(replicates):
        param_seed, data_seed = child_stream(root, r, 0), child_stream(root, r, 1)
        psi, rho = random_matrix_params(size, size, m, param_seed)
        if probe is not None:
            name, value = probe
            if name == "psi":
                psi[0] = value
            elif name == "rho":
                rho[0] = value
            else:
                raise ValueError(f"probe must name 'psi' or 'rho', got {name!r}")
        fit = fit_matrix(simulate_matrix(psi, rho, m, data_seed), config)
        psi_err[r] = np.abs(fit.psi - psi)
        rho_err[r] = np.abs(fit.rho - rho)
    return psi_err, rho_err


def rmsd_study_matrix(probe: str, probe_values, sizes=(12, 24, 50, 200),
                      replicates: int = 100, m: int = 5, seed=None,
                      config: MatrixFitConfig | None = None):
    """RMSD of the probed parameter's estimate for square matrices.

    Returns rows ``(size, probe_value, rmsd)``; cell (size a, value b) uses
    the random stream derived from (seed, a, b).
    """
    root = seed_sequence(seed)
    rows = []
    for a, size in enumerate(sizes):
        for b, value in enumerate(probe_values):
            psi_err, rho_err = matrix_errors(int(size), replicates, m, child_stream(root, a, b),
                                             (probe, float(value)), config)
            err = psi_err[:, 0] if probe == "psi" else rho_err[:, 0]
            rows.append((int(size), float(value), float(np.sqrt(np.mean(err ** 2)))))
    return rows
