"""Command line frontend: exit codes, outputs, manifests and replay."""
import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pltrans.cli import load_fit, main
from pltrans.data import read_csv, write_csv
from pltrans.families import LinkFamily
from pltrans.fit import penalized_objective
from pltrans.simulate import Sec9Config, gen_dataset


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d.csv"
    write_csv(gen_dataset(Sec9Config(n=300), 0), path)
    return path


@pytest.fixture(scope="module")
def fit_dir(tmp_path_factory, data_file):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", "--data", str(data_file), "--link", "cloglog", "--seed", "1", "--out", str(out)]) == 0
    return out


def _bad_file(tmp_path, row, value):
    lines = ["v,delta,z1,w"] + [f"{0.1 * (i + 1)},{i % 2},0.5,{i}" for i in range(10)]
    parts = lines[row].split(",")
    parts[1] = value
    lines[row] = ",".join(parts)
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_fit_happy_path(fit_dir):
    for name in ("beta.csv", "h_curve.csv", "H_step.csv", "h_spline.json", "diagnostics.json", "manifest.json"):
        assert (fit_dir / name).exists()
    diag = json.loads((fit_dir / "diagnostics.json").read_text())
    assert diag["converged"] is True
    with (fit_dir / "beta.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["name", "value"] and [r[0] for r in rows[1:]] == ["beta1", "beta2"]


def test_round_trip_objective(fit_dir, data_file, tmp_path):
    params, diag = load_fit(fit_dir)
    data = read_csv(data_file)
    value = penalized_objective(data, params, LinkFamily.from_string(diag["link"]), float(diag["lambda"]), True)
    assert abs(value - float(diag["objective"])) <= 1e-10
    assert main(["evaluate", "--data", str(data_file), "--fit-dir", str(fit_dir), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "evaluate.json").read_text())
    assert float(report["abs_difference"]) <= 1e-10


def test_manifest_contents(fit_dir, data_file):
    man = json.loads((fit_dir / "manifest.json").read_text())
    assert man["subcommand"] == "fit" and man["seed"] == 1
    assert man["flags"]["link"] == "cloglog"
    assert len(man["inputs"]["data"]) == 64
    assert man["duration_seconds"] >= 0


def test_manifest_replay_bit_identical(fit_dir, tmp_path, monkeypatch):
    man = json.loads((fit_dir / "manifest.json").read_text())
    argv = list(man["argv"])
    argv[argv.index("--out") + 1] = str(tmp_path)
    assert main(argv) == 0
    for name in ("beta.csv", "h_curve.csv", "H_step.csv", "h_spline.json", "diagnostics.json"):
        assert (tmp_path / name).read_bytes() == (fit_dir / name).read_bytes()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("PLTRANS_OUT", str(target))
    assert main(["check-family", "--link", "logit"]) == 0
    assert (target / "check_family.txt").exists() and (target / "manifest.json").exists()


def test_bad_delta_names_row(tmp_path, capsys):
    path = _bad_file(tmp_path, 7, "2")
    assert main(["fit", "--data", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "row 7" in capsys.readouterr().err


@pytest.mark.parametrize("value", ["nan", "x", "inf"])
def test_nonfinite_values_are_data_errors(tmp_path, value):
    path = tmp_path / "bad.csv"
    path.write_text(f"v,delta,z1,w\n1,1,{value},0.5\n2,0,1,0.7\n")
    assert main(["fit", "--data", str(path), "--out", str(tmp_path / "o")]) == 2


def test_failed_run_leaves_no_new_directory(tmp_path):
    target = tmp_path / "never"
    assert main(["check-family", "--link", "nosuchlink", "--out", str(target)]) == 1
    assert not target.exists()


def test_missing_file_is_data_error(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


def test_cauchy_violates(tmp_path, capsys):
    assert main(["check-family", "--link", "cauchy", "--out", str(tmp_path)]) == 0
    assert "B5(d): violated" in capsys.readouterr().out
    assert (tmp_path / "check_family.txt").read_text().strip().endswith("B5(d): violated")


def test_cloglog_satisfies(tmp_path, capsys):
    assert main(["check-family", "--link", "cloglog", "--out", str(tmp_path)]) == 0
    assert "B5(d): satisfied" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["fit"],
        ["fit", "--data", "x.csv", "--bogus"],
        ["check-family", "--link", "nosuchlink"],
        ["simulate", "--workers", "0"],
        ["info", "--preset", "other"],
    ],
)
def test_usage_errors(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path)] if len(argv) > 1 and argv[0] == "info" else [])) == 1
    assert "usage error" in capsys.readouterr().err


def test_jackknife_outputs(data_file, tmp_path):
    argv = ["jackknife", "--data", str(data_file), "--m", "10", "--beta0", "0.3,0.25", "--seed", "3", "--out", str(tmp_path)]
    assert main(argv) == 0
    region = json.loads((tmp_path / "region.json").read_text())
    assert region["m"] == 10 and region["k"] == 30 and "covered" in region
    with (tmp_path / "block_betas.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 11
    S = np.loadtxt(tmp_path / "S_star.csv", delimiter=",", skiprows=1)
    assert np.allclose(S, S.T)


def test_jackknife_too_few_blocks_is_numerical_error(data_file, tmp_path):
    assert main(["jackknife", "--data", str(data_file), "--m", "2", "--out", str(tmp_path)]) == 3


def test_jackknife_wrong_beta0_length(data_file, tmp_path):
    assert main(["jackknife", "--data", str(data_file), "--beta0", "0.3", "--out", str(tmp_path)]) == 1


def test_info_outputs(tmp_path):
    assert main(["info", "--grid", "41", "--out", str(tmp_path)]) == 0
    I0 = np.loadtxt(tmp_path / "I0.csv", delimiter=",", skiprows=1)
    Iinv = np.loadtxt(tmp_path / "I0_inv.csv", delimiter=",", skiprows=1)
    assert np.allclose(I0 @ Iinv, np.eye(2), atol=1e-10)
    assert np.loadtxt(tmp_path / "h_tilde.csv", delimiter=",", skiprows=1).shape == (41, 3)


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--n", "400", "--reps", "2", "--m", "10", "--out", str(tmp_path)]) == 0
    for name in ("table1.csv", "replicates.csv", "h_band.csv", "A_band.csv", "scatter_beta.csv", "run.json", "manifest.json"):
        assert (tmp_path / name).exists()


def test_simulate_bias(tmp_path, capsys):
    assert main(["simulate", "--experiment", "bias", "--n", "500", "--reps", "5", "--out", str(tmp_path)]) == 0
    assert "G0_lower: 0.25" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pltrans.cli", "check-family", "--link", "cauchy", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "B5(d): violated" in proc.stdout
