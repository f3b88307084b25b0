"""Simulate a rater-by-stimulus matrix and recover per-stimulus means and
per-rater confidences.

Run with ``python3 demos/rater_matrix.py``.
"""

import numpy as np

from gsd import RatingMatrix, fit_matrix, simulate_matrix
from gsd.matrix import random_matrix_params

psi, rho = random_matrix_params(n_raters=60, n_stimuli=40, seed=0)
ratings = simulate_matrix(psi, rho, seed=1)

# hide a third of the scores to mimic an incomplete design
scores = ratings.scores.copy()
scores[np.random.default_rng(2).random(scores.shape) < 1 / 3] = 0
scores[:, 0] = ratings.scores[:, 0]
scores[0] = ratings.scores[0]

fit = fit_matrix(RatingMatrix(scores))
print(f"converged={fit.converged} after {fit.iterations} sweeps, "
      f"loglik {fit.history[0]:.1f} -> {fit.log_likelihood:.1f}")
print(f"median |psi error| {np.median(np.abs(fit.psi - psi)):.3f}")
print(f"median |rho error| {np.median(np.abs(fit.rho - rho)):.3f}")
print(f"column-mean baseline |psi error| "
      f"{np.median(np.abs(np.nanmean(np.where(scores > 0, scores, np.nan), axis=0) - psi)):.3f}")
