import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from saddle_mle.cli import half_unit_last_digit, main, parse_components
from saddle_mle.composite_saddle import Normal, Uniform

DATA = Path(__file__).parent / "data"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_fit(tmp_path, *extra):
    out = tmp_path / "fit.csv"
    argv = ["fit", "--design", str(DATA / "design_4x2.csv"), "--obs", str(DATA / "obs_4x2.csv"), "--sigma", "0.1", "--out", str(out)]
    return main(argv + list(extra)), out


def test_fit_golden(tmp_path):
    code, out = run_fit(tmp_path, "--model", "rounding", "--delta", "0.5", "--method", "all")
    assert code == 0
    got, want = read_rows(out), read_rows(DATA / "fit_4x2.csv")
    assert [r["method"] for r in got] == ["OLS", "TLS", "AML"]
    assert list(got[0]) == ["method", "objective", "iterations", "converged", "grad_norm", "x_1", "x_2"]
    for g, w in zip(got, want):
        for key in ("objective", "x_1", "x_2"):
            assert float(g[key]) == pytest.approx(float(w[key]), rel=1e-6)
        assert g["converged"] == w["converged"]


def test_fit_ols_matches_lstsq(tmp_path):
    code, out = run_fit(tmp_path, "--model", "gaussian", "--rho", "1", "--method", "ols")
    assert code == 0
    (row,) = read_rows(out)
    H = np.loadtxt(DATA / "design_4x2.csv", delimiter=",", skiprows=1)
    y = np.loadtxt(DATA / "obs_4x2.csv", skiprows=1)
    np.testing.assert_allclose([float(row["x_1"]), float(row["x_2"])], np.linalg.lstsq(H, y, rcond=None)[0], rtol=1e-12)


@pytest.mark.parametrize(
    "extra",
    [
        ("--model", "float", "--digits", "2"),
        ("--model", "clipping", "--lambda", "2", "--gamma", "7"),
        ("--model", "gaussian", "--rho", "0.5"),
    ],
)
def test_fit_models_run(tmp_path, extra):
    code, out = run_fit(tmp_path, *extra, "--method", "aml")
    assert code in (0, 2)
    (row,) = read_rows(out)
    assert row["method"] == "AML"


def test_fit_missing_model_parameter(tmp_path, capsys):
    code, _ = run_fit(tmp_path, "--model", "clipping", "--lambda", "2")
    assert code == 1
    assert "--gamma" in capsys.readouterr().err


def test_fit_dimension_mismatch(tmp_path):
    obs = tmp_path / "y.csv"
    obs.write_text("y\n1\n2\n3\n")
    code = main(["fit", "--design", str(DATA / "design_4x2.csv"), "--obs", str(obs), "--model", "rounding", "--delta", "0.5", "--sigma", "0.1", "--out", str(tmp_path / "o.csv")])
    assert code == 1


def test_fit_requires_header(tmp_path):
    design = tmp_path / "H.csv"
    design.write_text("1,2\n3,4\n5,6\n")
    code = main(["fit", "--design", str(design), "--obs", str(DATA / "obs_4x2.csv"), "--model", "rounding", "--delta", "0.5", "--sigma", "0.1", "--out", "-"])
    assert code == 1


def test_fit_unknown_flag_is_usage_error(tmp_path):
    assert main(["fit", "--bogus"]) == 1
    assert main([]) == 1


def test_fit_non_convergence_exit_code(tmp_path):
    code, out = run_fit(tmp_path, "--model", "rounding", "--delta", "0.5", "--method", "aml", "--max-iters", "1")
    assert code == 2
    assert read_rows(out)[0]["converged"] == "0"


def test_half_unit_last_digit():
    np.testing.assert_allclose(half_unit_last_digit(np.array([-310.0, 0.012, 5.0, 0.0]), 2), [5.0, 0.0005, 0.05, 0.0])


# -- density --------------------------------------------------------------------


def test_parse_components():
    assert parse_components("uniform(0,1)+normal(0,1)") == [Uniform(0, 1), Normal(0, 1)]
    assert parse_components(" 3*uniform(0, 1) ") == [Uniform(0, 1)] * 3
    for bad in ("cauchy(0,1)", "uniform(0)", "uniform(1,0)", "normal(a,b)", "normal(0,1)+"):
        with pytest.raises(Exception):
            parse_components(bad)


def test_density_table(tmp_path):
    out = tmp_path / "d.csv"
    code = main(["density", "--components", "uniform(0,1)+normal(0,1)", "--from", "-1", "--to", "2", "--points", "7", "--oracle", "--gaussian-fit", "--diagnostics", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["alpha", "saddle", "oracle", "gaussian_fit", "t0"]
    assert len(rows) == 7
    mid = rows[3]
    assert float(mid["alpha"]) == 0.5
    assert float(mid["oracle"]) == pytest.approx(0.3829249225480262, abs=1e-10)
    assert float(mid["t0"]) == pytest.approx(0.0, abs=1e-12)
    assert float(mid["saddle"]) == pytest.approx(float(mid["oracle"]), rel=2e-3)


def test_density_single_point(capsys):
    assert main(["density", "--components", "normal(0,1)", "--from", "0", "--to", "0", "--points", "1"]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(text)))
    assert float(rows[0]["saddle"]) == pytest.approx(0.3989422804014327, rel=1e-15)


@pytest.mark.parametrize(
    "argv",
    [
        ["--from", "1", "--to", "0"],
        ["--from", "1", "--to", "1", "--points", "5"],
        ["--from", "0", "--to", "1", "--points", "0"],
    ],
)
def test_density_empty_range(argv):
    assert main(["density", "--components", "normal(0,1)", *argv]) == 1


def test_density_oracle_limit():
    assert main(["density", "--components", "4*uniform(0,1)", "--from", "1", "--to", "3", "--points", "3", "--oracle"]) == 1


# -- simulate -------------------------------------------------------------------


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_writes_outputs(tmp_path):
    cfg = write_config(tmp_path / "c.json", command="sweep_rows", model="clipping", n=2, values=[4, 8], trials=2, seed=3, max_iters=30, format="csv+svg")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    trials = read_rows(out / "trials.csv")
    assert len(trials) == 4
    assert all(r["t_aml"] == "" for r in trials)
    assert len(read_rows(out / "summary.csv")) == 2
    assert (out / "median_error.svg").read_text().startswith("<svg")


def test_simulate_square_study_histogram(tmp_path):
    cfg = write_config(tmp_path / "c.json", command="square_study", model="gaussian", m=8, n=3, trials=3, format="csv+svg")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert len(read_rows(out / "trials.csv")) == 3
    assert (out / "error_ratio_hist.svg").exists()


def test_simulate_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", command="sweep_cols", model="rounding", m=10, values=[1, 2], trials=2, seed=9, max_iters=40)
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path / "c.json", command="square_study", model="rounding", m=6, n=2, trials=2, seed=1, max_iters=20)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()


@pytest.mark.parametrize(
    "cfg, needle",
    [
        (dict(command="sweep_rows", model="rounding", colour="red"), "colour"),
        (dict(model="rounding"), "command"),
        (dict(command="sweep_rows", model="cauchy"), "model"),
        (dict(command="sweep_rows", model="rounding", trials=-1), "trials"),
        (dict(command="sweep_rows", model="rounding", values=[]), "values"),
        (dict(command="sweep_rows", model="rounding", n=5, values=[3, 10]), "exceed"),
        (dict(command="square_study", model="rounding", values=[3]), "values"),
        (dict(command="square_study", model="rounding", format="png"), "format"),
    ],
)
def test_simulate_config_errors(tmp_path, capsys, cfg, needle):
    path = write_config(tmp_path / "c.json", **cfg)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert needle in capsys.readouterr().err


def test_simulate_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{\n  "command": "sweep_rows",\n  "model": rounding\n}\n')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "c.json:3:" in capsys.readouterr().err
