"""Does a GSD fitted to a small subsample predict a large sample better than
the subsample's own empirical distribution?

Subsamples of size ``n_small`` are drawn with replacement from the large
sample's category frequencies. For each one, W_r is the log-likelihood of the
large sample under the fitted GSD minus that under the subsample EPMF, summed
over the categories the large sample actually uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .estimation import CountSample, GridConfig, _as_sample, fit_counts
from .gof import child_stream, replicate_rngs, seed_sequence

__all__ = [
    "Variant",
    "Verdict",
    "CompareResult",
    "compare_models",
    "likelihood_differences",
    "CompareBatch",
    "compare_batch",
]

Z_975 = 1.96


class Variant(str, Enum):
    UNMODIFIED = "unmodified"  # plain grid MLE against the plain EPMF
    CORRECTED = "corrected"  # constrained MLE against the add-half EPMF


class Verdict(str, Enum):
    GSD_BETTER = "gsd-better"
    EPMF_BETTER = "epmf-better"
    NO_DIFFERENCE = "no-difference"


@dataclass(frozen=True)
class CompareResult:
    p_hat_gsd: float
    p_hat_e: float
    diff: float
    ci_low: float
    ci_high: float
    mc: int
    n_small: int
    verdict: Verdict
    ties: int = 0
    undefined: int = field(default=0)  # both log-likelihoods were -inf

    def to_dict(self) -> dict:
        return {"p_hat_gsd": self.p_hat_gsd, "p_hat_e": self.p_hat_e, "diff": self.diff,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "mc": self.mc,
                "n_small": self.n_small, "verdict": self.verdict.value,
                "ties": self.ties, "undefined": self.undefined}


def _log_likelihoods(large_counts, probs):
    """sum over occupied large-sample cells of N_k log p_k, row-wise."""
    occupied = large_counts > 0
    with np.errstate(divide="ignore"):
        logs = np.log(probs[:, occupied])
    return logs @ large_counts[occupied].astype(float)


def likelihood_differences(large_sample: CountSample, small_counts,
                           variant: Variant | str = Variant.UNMODIFIED,
                           grid: GridConfig | None = None):
    """W_r for each row of ``small_counts``; returns ``(w, undefined_mask)``.

    W_r is +inf or -inf when exactly one side gives zero probability to an
    occupied cell. When both do, W_r is set to 0 and flagged in the mask.
    """
    large = _as_sample(large_sample)
    variant = Variant(variant)
    small = np.atleast_2d(np.asarray(small_counts, dtype=np.int64))
    corrected = variant is Variant.CORRECTED
    _, _, gsd_probs = fit_counts(small, large.m, grid, constrained=corrected)
    totals = small.sum(axis=1, keepdims=True).astype(float)
    if corrected:
        emp_probs = (small + 0.5) / (totals + large.m / 2.0)
    else:
        emp_probs = small / totals
    ll_gsd = _log_likelihoods(large.array, gsd_probs)
    ll_emp = _log_likelihoods(large.array, emp_probs)
    undefined = np.isneginf(ll_gsd) & np.isneginf(ll_emp)
    with np.errstate(invalid="ignore"):
        w = np.where(undefined, 0.0, ll_gsd - ll_emp)
    return w, undefined


def _summarise(w, undefined, n_small):
    mc = w.size
    wins = int(np.count_nonzero(w > 0))
    losses = int(np.count_nonzero(w < 0))
    p_gsd, p_e = wins / mc, losses / mc
    diff = p_gsd - p_e
    half = Z_975 * math.sqrt(max(p_gsd + p_e - diff * diff, 0.0) / mc)
    low, high = diff - half, diff + half
    if low > 0:
        verdict = Verdict.GSD_BETTER
    elif high < 0:
        verdict = Verdict.EPMF_BETTER
    else:
        verdict = Verdict.NO_DIFFERENCE
    return CompareResult(p_gsd, p_e, diff, low, high, mc, n_small, verdict,
                         ties=mc - wins - losses, undefined=int(undefined.sum()))


def compare_models(large_sample: CountSample, n_small: int, mc: int = 10_000,
                   variant: Variant | str = Variant.UNMODIFIED, seed=None,
                   grid: GridConfig | None = None) -> CompareResult:
    """Estimate P(W > 0) - P(W < 0) with a 95% confidence interval.

    The verdict is ``GSD_BETTER`` when the interval lies above zero,
    ``EPMF_BETTER`` when it lies below, and ``NO_DIFFERENCE`` otherwise.
    Ties (W = 0) count towards neither probability.
    """
    large = _as_sample(large_sample)
    if int(n_small) != n_small or not (1 <= n_small < large.n):
        raise ValueError(f"n_small must be an integer in [1, {large.n - 1}], got {n_small!r}")
    if int(mc) != mc or mc < 1:
        raise ValueError(f"mc must be a positive integer, got {mc!r}")
    if Variant(variant) is Variant.CORRECTED and n_small < 2:
        raise ValueError("the corrected variant needs n_small >= 2")
    freqs = large.array / large.n
    small = np.array([rng.multinomial(int(n_small), freqs)
                      for rng in replicate_rngs(seed, int(mc))])
    w, undefined = likelihood_differences(large, small, variant, grid)
    return _summarise(w, undefined, int(n_small))


@dataclass(frozen=True)
class CompareBatch:
    """Per-sample results and, per ``n_small``, histograms of ``diff``.

    ``results[n_small]`` lists one result per large sample, in input order.
    ``histograms[n_small]`` maps to ``(significant, insignificant)`` bin
    counts over ``bin_edges``; insignificant means ``NO_DIFFERENCE``.
    """

    results: dict
    bin_edges: np.ndarray
    histograms: dict

    def histogram_rows(self):
        """Rows (n_small, bin_low, bin_high, significant, insignificant)."""
        for n_small, (sig, insig) in self.histograms.items():
            for b in range(sig.size):
                yield (n_small, float(self.bin_edges[b]), float(self.bin_edges[b + 1]),
                       int(sig[b]), int(insig[b]))


def compare_batch(large_samples, n_small_values, mc: int = 10_000,
                  variant: Variant | str = Variant.UNMODIFIED, seed=None,
                  grid: GridConfig | None = None, bins: int = 40) -> CompareBatch:
    """Run :func:`compare_models` for every (large sample, n_small) pair.

    Pair (i, j) uses a random stream derived from (seed, i, j), so adding
    samples or sizes does not change existing results.
    """
    samples = [_as_sample(s) for s in large_samples]
    sizes = [int(n) for n in n_small_values]
    if not samples or not sizes:
        raise ValueError("need at least one large sample and one n_small")
    root = seed_sequence(seed)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    results, histograms = {}, {}
    for j, n_small in enumerate(sizes):
        row = []
        for i, large in enumerate(samples):
            row.append(compare_models(large, n_small, mc, variant,
                                      child_stream(root, i, j), grid))
        diffs = np.array([r.diff for r in row])
        insignificant = np.array([r.verdict is Verdict.NO_DIFFERENCE for r in row])
        sig, _ = np.histogram(diffs[~insignificant], bins=edges)
        insig, _ = np.histogram(diffs[insignificant], bins=edges)
        results[n_small] = row
        histograms[n_small] = (sig, insig)
    return CompareBatch(results, edges, histograms)
