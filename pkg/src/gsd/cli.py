"""Command-line entry point: ``gsd <command> [options]``.

Results go to stdout as JSON; plot data as CSV. Exit status is 0 on
success, 1 on a usage error and 2 on a data error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .compare import Variant, compare_batch
from .distribution import GsdParams, pmf_array, sample, variance_envelope
from .estimation import (CountSample, GridConfig, Method, mle_constrained, mle_gradient,
                         mle_grid, moments_estimate, log_likelihood, FitResult)
from .gof import Model, bootstrap_g_test, child_stream, pp_plot_data, seed_sequence
from .io import DataError, parse_counts, parse_scores_csv, to_json, write_csv
from .matrix import (MatrixFitConfig, fit_matrix, random_matrix_params, rmsd_study_1d,
                     rmsd_study_matrix, simulate_matrix)
from .probit import ProbitGrid, ProbitParams, probit_induced_moments, probit_mle_grid

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p, mc_default=None):
    p.add_argument("--m", type=int, default=5, help="scale size M (default 5)")
    p.add_argument("--seed", type=int, default=None, help="seed for all random draws")
    p.add_argument("--grid-step", type=float, default=0.01,
                   help="grid step in psi and rho (default 0.01)")
    if mc_default is not None:
        p.add_argument("--mc", type=int, default=mc_default,
                       help=f"bootstrap replicates (default {mc_default})")


def _add_input(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--counts", help="one sample as comma-separated counts n1,...,nM")
    src.add_argument("--input", help="CSV file (stimulus_id,rater_id,score or stimulus_id,n1..nM)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsd", description="Generalised Score Distribution toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate (psi, rho) per stimulus")
    _add_common(p)
    _add_input(p)
    p.add_argument("--method", choices=[m.value for m in Method], default="grid")

    p = sub.add_parser("gof", help="bootstrapped G-test per stimulus")
    _add_common(p, mc_default=10_000)
    _add_input(p)
    p.add_argument("--model", choices=[m.value for m in Model], default="gsd")
    p.add_argument("--estimator", choices=["constrained", "grid"], default="constrained")
    p.add_argument("--alpha", type=float, default=0.05, help="P-P bound level")
    p.add_argument("--pp-csv", help="also write P-P plot data of the p-values here")

    p = sub.add_parser("sample", help="draw scores from a GSD")
    _add_common(p)
    p.add_argument("--psi", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("-n", type=int, required=True, help="number of scores")

    p = sub.add_parser("compare", help="GSD versus empirical distribution on large samples")
    _add_common(p, mc_default=10_000)
    _add_input(p)
    p.add_argument("--n-small", type=_int_list, default=[12, 24, 50],
                   help="subsample sizes, comma-separated (default 12,24,50)")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="unmodified")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--histogram-csv", help="also write histogram data here")

    p = sub.add_parser("matrix-fit", help="per-stimulus psi and per-rater rho")
    _add_common(p)
    p.add_argument("--input", required=True, help="CSV with stimulus_id,rater_id,score")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-sweeps", type=int, default=500)

    p = sub.add_parser("simulate", help="write simulated scores as CSV")
    _add_common(p)
    p.add_argument("--psi", type=_float_list, help="stimulus means, comma-separated")
    p.add_argument("--rho", type=_float_list, help="rater confidences, comma-separated")
    p.add_argument("--n-raters", type=int, help="draw rho uniformly for this many raters")
    p.add_argument("--n-stimuli", type=int, help="draw psi uniformly for this many stimuli")
    p.add_argument("--params-json", help="write the generating parameters here")

    p = sub.add_parser("rmsd-study", help="estimation error tables as CSV")
    _add_common(p)
    p.add_argument("--mode", choices=["1d", "matrix"], default="1d")
    p.add_argument("--sizes", type=_int_list, default=[12, 24, 50, 200])
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--psi-values", type=_float_list,
                   help="psi grid (1d mode; default 10 points over [1.2, M-0.2])")
    p.add_argument("--rho-values", type=_float_list,
                   help="rho grid (1d mode; default 10 points over [0.05, 0.95])")
    p.add_argument("--probe", choices=["psi", "rho"], default="psi", help="matrix mode")
    p.add_argument("--probe-values", type=_float_list, help="matrix mode probe values")

    p = sub.add_parser("probit-fit", help="grid MLE of the ordered probit")
    _add_common(p)
    _add_input(p)
    p.add_argument("--mu-step", type=float, default=0.01)
    p.add_argument("--sigma-min", type=float, default=0.01)
    p.add_argument("--sigma-max", type=float, default=5.0)
    p.add_argument("--sigma-step", type=float, default=0.01)

    p = sub.add_parser("pp-plot", help="P-P plot data for a list of p-values")
    p.add_argument("--p-values", required=True,
                   help="file with one p-value per line, or a comma-separated list")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--bound", choices=["binomial", "normal"], default="binomial")

    p = sub.add_parser("envelope", help="variance envelope or probit moment map as CSV")
    _add_common(p)
    p.add_argument("--kind", choices=["gsd", "probit", "pmf"], default="gsd")
    p.add_argument("--step", type=float, default=0.01, help="psi or mu step")
    p.add_argument("--sigma", type=_float_list, default=[0.25, 0.5, 1.0, 2.0],
                   help="probit latent standard deviations (kind=probit)")
    p.add_argument("--rho-values", type=_float_list, default=[0.0, 0.25, 0.5, 0.75, 1.0],
                   help="rho values (kind=pmf)")
    return parser


# ---------------------------------------------------------------------------


def _grid(args):
    return GridConfig(args.grid_step, args.grid_step)


def _samples(args):
    if args.counts is not None:
        return [("sample", parse_counts(args.counts, args.m))]
    return parse_scores_csv(args.input, args.m).items()


def _settings(args, **extra):
    keys = ("m", "seed", "grid_step", "mc", "method", "model", "estimator", "variant")
    out = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    out.update(extra)
    return out


def _report(args, results, **extra):
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "command": args.command, "settings": _settings(args), "results": results, **extra}


def _fit_one(sample_: CountSample, method: Method, grid) -> FitResult:
    if method is Method.MOMENTS:
        params = moments_estimate(sample_)
        return FitResult(params, log_likelihood(params, sample_), Method.MOMENTS, {})
    if method is Method.GRID:
        return mle_grid(sample_, grid)
    if method is Method.GRADIENT:
        return mle_gradient(sample_)
    return mle_constrained(sample_, grid)


def _cmd_fit(args, out):
    method = Method(args.method)
    results = [{"stimulus_id": sid, "counts": list(s.counts),
                "fit": _fit_one(s, method, _grid(args)).to_dict()}
               for sid, s in _samples(args)]
    out.write(to_json(_report(args, results)) + "\n")


def _cmd_gof(args, out):
    results, p_values = [], []
    for index, (sid, s) in enumerate(_samples(args)):
        # each stimulus gets its own stream so reordering the file is harmless
        seed = None if args.seed is None else child_stream(seed_sequence(args.seed), index)
        grid = ProbitGrid() if args.model == "probit" else _grid(args)
        res = bootstrap_g_test(s, args.model, args.mc, seed, estimator=args.estimator, grid=grid)
        p_values.append(res.p_value)
        results.append({"stimulus_id": sid, "counts": list(s.counts), **res.to_dict()})
    pp = pp_plot_data(p_values, args.alpha)
    pp_rows = [list(r) for r in pp.to_rows()]
    if args.pp_csv:
        with open(args.pp_csv, "w", encoding="utf-8") as fh:
            write_csv(fh, ["x", "ecdf", "bound"], pp_rows)
    out.write(to_json(_report(args, results, pp_plot={
        "alpha": args.alpha, "bound_type": pp.bound_type,
        "fraction_exceeding": pp.fraction_exceeding,
        "x": pp.x, "ecdf": pp.ecdf, "bound": pp.bound})) + "\n")


def _cmd_sample(args, out):
    params = GsdParams(args.psi, args.rho, args.m)
    draws = sample(params, args.n, args.seed)
    out.write(",".join(str(int(v)) for v in draws) + "\n")


def _cmd_compare(args, out):
    items = list(_samples(args))
    batch = compare_batch([s for _, s in items], args.n_small, args.mc, args.variant,
                          args.seed, _grid(args), args.bins)
    results = [{"stimulus_id": sid, **res.to_dict()}
               for n_small in args.n_small
               for (sid, _), res in zip(items, batch.results[n_small])]
    hist_rows = [list(r) for r in batch.histogram_rows()]
    if args.histogram_csv:
        with open(args.histogram_csv, "w", encoding="utf-8") as fh:
            write_csv(fh, ["n_small", "bin_low", "bin_high", "significant", "insignificant"],
                      hist_rows)
    out.write(to_json(_report(args, results, histogram={
        "bin_edges": batch.bin_edges,
        "counts": {str(n): {"significant": sig, "insignificant": insig}
                   for n, (sig, insig) in batch.histograms.items()}})) + "\n")


def _cmd_matrix_fit(args, out):
    parsed = parse_scores_csv(args.input, args.m)
    if parsed.ratings is None:
        raise DataError("matrix-fit needs a rater_id on every row and one score per "
                        "(rater, stimulus) pair")
    fit = fit_matrix(parsed.ratings, MatrixFitConfig(tol=args.tol, max_sweeps=args.max_sweeps))
    out.write(to_json(_report(args, {
        "stimuli": [{"stimulus_id": sid, "psi": float(v)}
                    for sid, v in zip(parsed.stimulus_ids, fit.psi)],
        "raters": [{"rater_id": rid, "rho": float(v)}
                   for rid, v in zip(parsed.rater_ids, fit.rho)],
        "log_likelihood": fit.log_likelihood, "sweeps": fit.iterations,
        "converged": fit.converged})) + "\n")


def _cmd_simulate(args, out):
    data_seed, param_seed = np.random.SeedSequence(args.seed).spawn(2)
    n_stim = args.n_stimuli if args.psi is None else len(args.psi)
    n_rat = args.n_raters if args.rho is None else len(args.rho)
    if n_stim is None or n_rat is None:
        raise UsageError("simulate needs --psi or --n-stimuli, and --rho or --n-raters")
    if n_stim < 1 or n_rat < 1:
        raise UsageError("need at least one stimulus and one rater")
    psi_rand, rho_rand = random_matrix_params(n_rat, n_stim, args.m, param_seed)
    psi = np.asarray(args.psi, dtype=float) if args.psi is not None else psi_rand
    rho = np.asarray(args.rho, dtype=float) if args.rho is not None else rho_rand
    ratings = simulate_matrix(psi, rho, args.m, data_seed)
    rows = [(f"s{j + 1}", f"r{i + 1}", int(ratings.scores[i, j]))
            for j in range(n_stim) for i in range(n_rat)]
    write_csv(out, ["stimulus_id", "rater_id", "score"], rows)
    if args.params_json:
        with open(args.params_json, "w", encoding="utf-8") as fh:
            fh.write(to_json({"m": args.m, "seed": args.seed, "psi": psi, "rho": rho}) + "\n")


def _cmd_rmsd_study(args, out):
    if args.mode == "1d":
        psi_vals = args.psi_values or np.linspace(1.2, args.m - 0.2, 10)
        rho_vals = args.rho_values or np.linspace(0.05, 0.95, 10)
        table = rmsd_study_1d(psi_vals, rho_vals, args.sizes, args.replicates, args.m,
                              args.seed, _grid(args))
        write_csv(out, ["n", "psi", "rho", "rmsd_psi", "rmsd_rho"], table.rows())
        return
    values = args.probe_values or ([1.5, 2.5, 3.5, 4.5] if args.probe == "psi"
                                   else [0.1, 0.4, 0.7, 0.9])
    rows = rmsd_study_matrix(args.probe, values, args.sizes, args.replicates, args.m, args.seed)
    write_csv(out, ["n", args.probe, f"rmsd_{args.probe}"], rows)


def _cmd_probit_fit(args, out):
    grid = ProbitGrid(mu_step=args.mu_step, sigma_min=args.sigma_min,
                      sigma_max=args.sigma_max, sigma_step=args.sigma_step)
    results = [{"stimulus_id": sid, "counts": list(s.counts),
                "fit": probit_mle_grid(s, grid).to_dict()}
               for sid, s in _samples(args)]
    out.write(to_json(_report(args, results)) + "\n")


def _read_p_values(source):
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read().replace("\n", ",")
    except OSError:
        text = source
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DataError("p-values must be numbers") from None


def _cmd_pp_plot(args, out):
    pp = pp_plot_data(_read_p_values(args.p_values), args.alpha, args.points, args.bound)
    write_csv(out, ["x", "ecdf", "bound"], pp.to_rows())


def _cmd_envelope(args, out):
    m = args.m
    if args.kind == "gsd":
        psi = np.round(np.arange(1.0, m + 1e-9, args.step), 10)
        rows = []
        for v in psi:
            env = variance_envelope(float(v), m)
            rows.append((float(v), env.v_min, env.v_max, env.v_bin, env.c))
        write_csv(out, ["psi", "v_min", "v_max", "v_bin", "c"], rows)
    elif args.kind == "probit":
        mu = np.round(np.arange(0.0, m + 1.0 + 1e-9, args.step), 10)
        rows = []
        for sigma in args.sigma:
            for v in mu:
                e_u, v_u = probit_induced_moments(ProbitParams(float(v), sigma, m))
                rows.append((sigma, float(v), e_u, e_u - float(v), v_u))
        write_csv(out, ["sigma", "mu", "e_u", "e_u_minus_mu", "v_u"], rows)
    else:
        psi = np.round(np.arange(1.0, m + 1e-9, args.step), 10)
        rows = []
        for rho in args.rho_values:
            probs = pmf_array(psi, np.full(psi.size, rho), m)
            for v, p in zip(psi, probs):
                rows.append((float(v), rho, *[float(x) for x in p]))
        write_csv(out, ["psi", "rho"] + [f"p{k}" for k in range(1, m + 1)], rows)


COMMANDS = {
    "fit": _cmd_fit,
    "gof": _cmd_gof,
    "sample": _cmd_sample,
    "compare": _cmd_compare,
    "matrix-fit": _cmd_matrix_fit,
    "simulate": _cmd_simulate,
    "rmsd-study": _cmd_rmsd_study,
    "probit-fit": _cmd_probit_fit,
    "pp-plot": _cmd_pp_plot,
    "envelope": _cmd_envelope,
}


def run_command(argv, stdout=None, stderr=None) -> int:
    """Run one command; returns the exit status instead of exiting."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (DataError, ValueError, OSError) as exc:
        stderr.write(f"gsd: data error: {exc}\n")
        return 2
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
