import io
import json
import subprocess
import sys

import numpy as np
import pytest

from gsd.cli import run_command
from gsd.io import DataError, parse_counts, parse_scores_csv, parse_scores_text, to_json


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command(argv, out, err)
    return code, out.getvalue(), err.getvalue()


# --- parsing ----------------------------------------------------------------


def test_long_layout_counts():
    parsed = parse_scores_text("stimulus_id,rater_id,score\na,r1,3\na,r2,3\na,r3,3\n")
    assert parsed.samples["a"].counts == (0, 0, 3, 0, 0)
    assert parsed.ratings is not None and parsed.ratings.scores.shape == (3, 1)


def test_aggregate_layout():
    parsed = parse_scores_text("stimulus_id,n1,n2,n3,n4,n5\na,2,14,6,1,1\n")
    assert parsed.samples["a"].counts == (2, 14, 6, 1, 1)


def test_out_of_range_score_names_line():
    with pytest.raises(DataError, match="line 3"):
        parse_scores_text("stimulus_id,rater_id,score\na,r1,3\na,r2,6\n")


def test_long_layout_without_raters():
    parsed = parse_scores_text("stimulus_id,score\nb,1\na,5\nb,2\n")
    assert parsed.stimulus_ids == ("b", "a")
    assert parsed.ratings is None


def test_repeated_pair_has_no_matrix():
    parsed = parse_scores_text("stimulus_id,rater_id,score\na,r1,3\na,r1,4\n")
    assert parsed.samples["a"].counts == (0, 0, 1, 1, 0)
    assert parsed.ratings is None


def test_missing_cells_in_matrix():
    text = "stimulus_id,rater_id,score\na,r1,3\nb,r2,4\nb,r1,2\n"
    scores = parse_scores_text(text).ratings.scores
    assert scores.tolist() == [[3, 2], [0, 4]]


@pytest.mark.parametrize("text, pattern", [
    ("", "empty"),
    ("id,score\na,3\n", "header"),
    ("stimulus_id,n1,n2,n3\na,1,2,3\n", "m = 5"),
    ("stimulus_id,n1,n2,n3,n4,n5\na,1,2,3,4,5\na,1,1,1,1,1\n", "duplicate"),
    ("stimulus_id,n1,n2,n3,n4,n5\na,0,0,0,0,0\n", "line 2"),
    ("stimulus_id,rater_id,score\na,r1,x\n", "line 2"),
    ("stimulus_id,rater_id,score\na,r1\n", "line 2"),
    ("stimulus_id,rater_id,score\n", "no data"),
])
def test_malformed_input(text, pattern):
    with pytest.raises(DataError, match=pattern):
        parse_scores_text(text)


def test_parse_counts():
    assert parse_counts("0, 6,12,6,0").counts == (0, 6, 12, 6, 0)
    with pytest.raises(DataError):
        parse_counts("1,2,x")
    with pytest.raises(DataError):
        parse_counts("1,2,3", m=5)


def test_missing_file():
    with pytest.raises(DataError, match="cannot read"):
        parse_scores_csv("/nonexistent/scores.csv")


def test_json_infinities():
    assert json.loads(to_json({"a": float("-inf"), "b": np.float64(1.5), "c": np.arange(2)})) == \
        {"a": "-inf", "b": 1.5, "c": [0, 1]}


# --- command line -----------------------------------------------------------


def test_fit_moments():
    code, out, _ = run(["fit", "--m", "5", "--method", "moments", "--counts", "0,6,12,6,0"])
    assert code == 0
    report = json.loads(out)
    fit = report["results"][0]["fit"]
    assert fit["psi"] == pytest.approx(3.0) and fit["rho"] == pytest.approx(0.875)
    assert report["schema_version"] == 1 and report["command"] == "fit"


@pytest.mark.parametrize("method", ["grid", "gradient", "constrained"])
def test_fit_methods(method):
    code, out, _ = run(["fit", "--method", method, "--counts", "2,14,6,1,1"])
    assert code == 0
    assert json.loads(out)["results"][0]["fit"]["method"] == method


def test_gof_reproducible(tmp_path):
    data = tmp_path / "scores.csv"
    data.write_text("stimulus_id,n1,n2,n3,n4,n5\na,2,14,6,1,1\nb,1,2,4,2,1\n")
    pp = tmp_path / "pp.csv"
    argv = ["gof", "--model", "gsd", "--mc", "100", "--seed", "7", "--input", str(data),
            "--pp-csv", str(pp)]
    first, second = run(argv), run(argv)
    assert first[0] == 0 and first == second
    report = json.loads(first[1])
    assert [r["stimulus_id"] for r in report["results"]] == ["a", "b"]
    assert pp.read_text().startswith("x,ecdf,bound\n")


def test_sample_point_mass():
    assert run(["sample", "--psi", "3", "--rho", "1", "--m", "5", "-n", "5"])[1] == "3,3,3,3,3\n"


def test_compare_histogram(tmp_path):
    hist = tmp_path / "hist.csv"
    code, out, _ = run(["compare", "--counts", "20,50,60,50,20", "--n-small", "12,24",
                        "--mc", "100", "--seed", "1", "--bins", "10",
                        "--histogram-csv", str(hist)])
    assert code == 0
    report = json.loads(out)
    assert [r["n_small"] for r in report["results"]] == [12, 24]
    assert len(hist.read_text().splitlines()) == 1 + 2 * 10


def test_simulate_then_matrix_fit(tmp_path):
    data = tmp_path / "sim.csv"
    params = tmp_path / "params.json"
    code, out, _ = run(["simulate", "--n-raters", "15", "--n-stimuli", "10", "--seed", "3",
                        "--params-json", str(params)])
    assert code == 0
    data.write_text(out)
    assert len(out.splitlines()) == 1 + 150
    code, out, _ = run(["matrix-fit", "--input", str(data)])
    assert code == 0
    report = json.loads(out)["results"]
    truth = json.loads(params.read_text())
    psi_hat = [s["psi"] for s in report["stimuli"]]
    assert np.median(np.abs(np.array(psi_hat) - truth["psi"])) < 0.6
    assert len(report["raters"]) == 15


def test_matrix_fit_needs_raters(tmp_path):
    data = tmp_path / "agg.csv"
    data.write_text("stimulus_id,n1,n2,n3,n4,n5\na,2,14,6,1,1\n")
    assert run(["matrix-fit", "--input", str(data)])[0] == 2


def test_rmsd_study_csv():
    code, out, _ = run(["rmsd-study", "--sizes", "12", "--replicates", "20",
                        "--psi-values", "2,3", "--rho-values", "0.5", "--seed", "0"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n,psi,rho,rmsd_psi,rmsd_rho" and len(lines) == 3


def test_probit_fit():
    code, out, _ = run(["probit-fit", "--counts", "1,2,4,2,1"])
    assert json.loads(out)["results"][0]["fit"]["mu"] == pytest.approx(3.0)


def test_pp_plot_inline():
    code, out, _ = run(["pp-plot", "--p-values", "0.1,0.5,0.9", "--points", "5"])
    assert code == 0 and len(out.splitlines()) == 6


@pytest.mark.parametrize("kind, header", [("gsd", "psi,v_min,v_max,v_bin,c"),
                                          ("probit", "sigma,mu,e_u,e_u_minus_mu,v_u"),
                                          ("pmf", "psi,rho,p1,p2,p3,p4,p5")])
def test_envelope_tables(kind, header):
    code, out, _ = run(["envelope", "--kind", kind, "--step", "0.5"])
    assert code == 0 and out.splitlines()[0] == header


def test_errors_and_exit_codes():
    assert run(["fit", "--bogus"])[0] == 1
    assert run([])[0] == 1
    code, _, err = run(["fit", "--input", "/nonexistent.csv"])
    assert code == 2 and "cannot read" in err
    assert run(["sample", "--psi", "7", "--rho", "0.5", "-n", "3"])[0] == 2


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "gsd", "--version"], capture_output=True,
                          text=True)
    assert done.returncode == 0 and "0.1.0" in done.stdout
