import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gsd import (GsdParams, MatrixFitConfig, RatingMatrix, fit_matrix, pmf, rmsd_study_1d,
                 rmsd_study_matrix, simulate_matrix)
from gsd.matrix import initial_estimates, matrix_errors, random_matrix_params


def small_problem(n_raters=30, n_stimuli=20, seed=0):
    psi, rho = random_matrix_params(n_raters, n_stimuli, 5, seed)
    return psi, rho, simulate_matrix(psi, rho, 5, seed + 1)


@pytest.mark.parametrize("scores", [[[1, 2], [0, 0]], [[1, 0], [2, 0]], [[1, 6]], [1, 2, 3],
                                    [[-1, 2]]])
def test_rating_matrix_validation(scores):
    with pytest.raises(ValueError):
        RatingMatrix(scores, 5)


def test_simulate_point_masses():
    ratings = simulate_matrix([2.0, 3.0, 5.0], np.ones(6), 5, seed=1)
    assert_array_equal(ratings.scores, np.tile([2, 3, 5], (6, 1)))


def test_simulate_reproducible():
    psi, rho = random_matrix_params(200, 200, 5, seed=3)
    a = simulate_matrix(psi, rho, 5, seed=4).scores
    b = simulate_matrix(psi, rho, 5, seed=4).scores
    assert_array_equal(a, b)
    assert not np.array_equal(a, simulate_matrix(psi, rho, 5, seed=5).scores)


def test_simulate_column_means_converge():
    psi = np.array([1.4, 2.5, 3.0, 4.7])
    rho = np.random.default_rng(0).uniform(0, 1, 10_000)
    ratings = simulate_matrix(psi, rho, 5, seed=2)
    assert_allclose(ratings.scores.mean(axis=0), psi, atol=0.03)


def test_simulate_cell_distribution():
    # one rater, many identical stimuli: frequencies follow the GSD
    ratings = simulate_matrix(np.full(50_000, 2.85), [0.38], 5, seed=6)
    freq = np.bincount(ratings.scores.ravel(), minlength=6)[1:] / 50_000
    assert_allclose(freq, pmf(GsdParams(2.85, 0.38)), atol=0.01)


def test_simulate_rejects_bad_params():
    with pytest.raises(ValueError):
        simulate_matrix([0.5], [0.5], 5)
    with pytest.raises(ValueError):
        simulate_matrix([3.0], [1.5], 5)


def test_constant_matrix_fit():
    fit = fit_matrix(RatingMatrix(np.full((6, 4), 3), 5))
    assert_allclose(fit.psi, 3.0)
    assert_allclose(fit.rho, 1.0)
    assert fit.log_likelihood == 0.0


def test_fit_history_monotone_and_consistent():
    _, _, ratings = small_problem()
    fit = fit_matrix(ratings)
    assert fit.converged
    assert np.all(np.diff(fit.history) >= -1e-12 * np.abs(fit.history[1:]))
    raters, stimuli, scores = ratings.cells()
    direct = sum(math.log(pmf(GsdParams(fit.psi[j], fit.rho[i]))[s - 1])
                 for i, j, s in zip(raters, stimuli, scores))
    assert fit.log_likelihood == pytest.approx(direct, rel=1e-12)


def test_fit_improves_on_start():
    _, _, ratings = small_problem(seed=4)
    psi0, rho0 = initial_estimates(ratings)
    start = fit_matrix(ratings, MatrixFitConfig(max_sweeps=1), init=(psi0, rho0)).history[0]
    assert fit_matrix(ratings).log_likelihood > start


def test_relabelling_permutes_estimates():
    _, _, ratings = small_problem(seed=7)
    rng = np.random.default_rng(1)
    rows = rng.permutation(ratings.n_raters)
    cols = rng.permutation(ratings.n_stimuli)
    fit = fit_matrix(ratings)
    moved = fit_matrix(RatingMatrix(ratings.scores[rows][:, cols], 5))
    assert_allclose(moved.rho, fit.rho[rows], atol=1e-6)
    assert_allclose(moved.psi, fit.psi[cols], atol=1e-6)


def test_missing_entries():
    psi, rho, ratings = small_problem(seed=9)
    scores = ratings.scores.copy()
    scores[::3, ::2] = 0
    fit = fit_matrix(RatingMatrix(scores, 5))
    assert fit.converged
    assert np.median(np.abs(fit.psi - psi)) < 0.5


def test_matrix_errors_shapes_and_probe():
    psi_err, rho_err = matrix_errors(12, 2, seed=0, probe=("psi", 1.0))
    assert psi_err.shape == rho_err.shape == (2, 12)
    with pytest.raises(ValueError):
        matrix_errors(12, 1, seed=0, probe=("sigma", 1.0))


def test_rmsd_study_matrix_rows():
    rows = rmsd_study_matrix("rho", [0.5], sizes=(12,), replicates=2, seed=1)
    assert len(rows) == 1 and rows[0][:2] == (12, 0.5) and rows[0][2] >= 0


def test_rmsd_point_mass_cell():
    table = rmsd_study_1d([1.0, 3.0], [1.0], sizes=(12, 24), replicates=50, seed=0)
    assert_allclose(table.rmsd_psi[:, :, 0], 0.0, atol=1e-12)
    assert len(list(table.rows())) == 4


def test_rmsd_1d_shrinks_with_n():
    table = rmsd_study_1d([2.0, 3.3], [0.3, 0.9], sizes=(12, 200), replicates=300, seed=2)
    assert np.all(table.rmsd_psi[1] < table.rmsd_psi[0])
    assert np.all(table.rmsd_rho[1] < table.rmsd_rho[0])


def test_rmsd_1d_reproducible():
    a = rmsd_study_1d([2.5], [0.5], sizes=(12,), replicates=40, seed=3)
    b = rmsd_study_1d([2.5], [0.5], sizes=(12,), replicates=40, seed=3)
    assert_array_equal(a.rmsd_psi, b.rmsd_psi)
