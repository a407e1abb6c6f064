import json
import subprocess
import sys

import numpy as np
import pytest

from mmvdtest import cli
from mmvdtest.fda_core import FunctionalSample, make_equispaced_grid
from mmvdtest.mmvd import NumericalConsistencyError


def _write(path, sample):
    cli.write_curves_csv(path, sample)
    return str(path)


@pytest.fixture
def three_files(tmp_path):
    rng = np.random.default_rng(41)
    g = make_equispaced_grid(11)
    return [
        _write(tmp_path / f"g{j}.csv", FunctionalSample(g, rng.standard_normal((n, 11))))
        for j, n in enumerate((6, 7, 5))
    ]


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_identical_files_give_zero_and_p_one(tmp_path, capsys):
    g = make_equispaced_grid(6)
    s = FunctionalSample(g, np.tile(g.points, (4, 1)))
    files = [_write(tmp_path / f"{j}.csv", s) for j in range(3)]
    code, out, _ = _run(["test", *files, "--permutations", "19"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["statistic"] == 0.0
    assert rep["p_value"] == 1.0
    assert rep["reject"] is False


def test_json_report_validates_and_is_reproducible(three_files, capsys):
    argv = ["test", *three_files, "--permutations", "49", "--seed", "3"]
    code, out1, _ = _run(argv, capsys)
    assert code == 0
    rep = json.loads(out1)
    cli.validate_test_report(rep)
    assert rep["n_sizes"] == [6, 7, 5]
    assert rep["B"] == 49 and len(rep["replicate_values"]) == 49
    _, out2, _ = _run(argv, capsys)
    assert out1 == out2


def test_validate_report_catches_tampering(three_files, capsys):
    _, out, _ = _run(["test", *three_files, "--permutations", "19"], capsys)
    rep = json.loads(out)
    bad = dict(rep, p_value=rep["p_value"] / 2 + 1e-6)
    with pytest.raises(ValueError):
        cli.validate_test_report(bad)
    bad = dict(rep, reject=not rep["reject"])
    with pytest.raises(ValueError):
        cli.validate_test_report(bad)


def test_threads_flag_and_env_agree(three_files, capsys, monkeypatch):
    argv = ["test", *three_files, "--permutations", "40"]
    _, base, _ = _run(argv, capsys)
    _, flagged, _ = _run(argv + ["--threads", "4"], capsys)
    monkeypatch.setenv("MMVD_THREADS", "8")
    _, env, _ = _run(argv, capsys)
    assert base == flagged == env
    monkeypatch.setenv("MMVD_THREADS", "many")
    code, _, err = _run(argv, capsys)
    assert code == 2 and "MMVD_THREADS" in err


def test_malformed_row_reports_file_and_line(tmp_path, capsys):
    good = tmp_path / "a.csv"
    good.write_text("0,0.5,1\n1,2,3\n4,5,6\n")
    bad = tmp_path / "b.csv"
    bad.write_text("0,0.5,1\n1,2,3\n4,oops,6\n")
    code, _, err = _run(["test", str(good), str(bad)], capsys)
    assert code == 2
    assert f"{bad}:3" in err


@pytest.mark.parametrize(
    "content, fragment",
    [
        ("0,0.5,1\n1,2,3\n", "at least 2 curves"),
        ("0,0.5,1\n1,2,3\n4,5\n", ":3"),
        ("0,0.7,0.5\n1,2,3\n4,5,6\n", "invalid grid"),
        ("0,0.5,1\n1,nan,3\n4,5,6\n", "non-finite"),
        ("", "empty"),
    ],
)
def test_bad_inputs_exit_two(tmp_path, capsys, content, fragment):
    good = tmp_path / "a.csv"
    good.write_text("0,0.5,1\n1,2,3\n4,5,6\n")
    bad = tmp_path / "b.csv"
    bad.write_text(content)
    code, _, err = _run(["test", str(good), str(bad)], capsys)
    assert code == 2
    assert fragment in err


def test_grid_mismatch_and_missing_file(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("0,0.5,1\n1,2,3\n4,5,6\n")
    b = tmp_path / "b.csv"
    b.write_text("0,0.4,1\n1,2,3\n4,5,6\n")
    code, _, err = _run(["test", str(a), str(b)], capsys)
    assert code == 2 and "grid" in err
    code, _, _ = _run(["test", str(a), str(tmp_path / "missing.csv")], capsys)
    assert code == 2
    code, _, _ = _run(["test", str(a)], capsys)
    assert code == 2


def test_explicit_weights(three_files, capsys):
    with pytest.warns(UserWarning):
        code, out, _ = _run(
            ["test", *three_files, "--permutations", "9", "--weights", "0.2,0.3,0.5"], capsys
        )
    assert code == 0
    assert json.loads(out)["weights"] == pytest.approx([0.2, 0.3, 0.5])
    code, _, _ = _run(["test", *three_files, "--weights", "0.5,0.5"], capsys)
    assert code == 2
    code, _, _ = _run(["test", *three_files, "--weights", "0.2,0.2,0.2"], capsys)
    assert code == 2


def test_csv_format_and_gram_out(three_files, tmp_path, capsys):
    gram_path = tmp_path / "gram.csv"
    code, out, _ = _run(
        ["test", *three_files, "--permutations", "9", "--format", "csv",
         "--gram-out", str(gram_path)],
        capsys,
    )
    assert code == 0
    rows = dict(line.split(",", 1) for line in out.strip().splitlines()[1:])
    assert "p_value" in rows and "replicate_values" not in rows
    gram = np.loadtxt(gram_path, delimiter=",")
    assert gram.shape == (18, 18)
    assert np.array_equal(gram, gram.T)


def test_gmmd_statistic_option(three_files, capsys):
    code, out, _ = _run(["test", *three_files, "--permutations", "9", "--statistic", "gmmd"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["statistic_kind"] == "gmmd" and "pair_mmd_sq" in rep


def test_out_file(three_files, tmp_path, capsys):
    target = tmp_path / "r.json"
    code, out, _ = _run(["test", *three_files, "--permutations", "9", "--out", str(target)], capsys)
    assert code == 0 and out == ""
    cli.validate_test_report(json.loads(target.read_text()))


def test_simulate_single_replication(capsys):
    code, out, _ = _run(
        ["simulate", "--model", "1", "--n", "6", "--replications", "1", "--permutations", "9"],
        capsys,
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["replications"] == 1
    assert rep["rejection_rate"] in (0.0, 1.0)
    assert set(rep["per_method"]) == {"mmvd", "gmmd"}


def test_simulate_multiple_and_csv(capsys):
    argv = ["simulate", "--model", "1,3", "--n", "5,6", "--replications", "2",
            "--permutations", "9", "--methods", "mmvd"]
    code, out, _ = _run(argv, capsys)
    assert code == 0 and len(json.loads(out)["reports"]) == 4
    code, out, _ = _run(argv + ["--format", "csv"], capsys)
    lines = out.strip().splitlines()
    assert lines[0] == "model,n,replications,mmvd" and len(lines) == 5


def test_simulate_invalid_model(capsys):
    code, _, err = _run(["simulate", "--model", "4", "--replications", "1"], capsys)
    assert code == 2 and "model" in err


def test_emitted_data_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "data"
    code, _, _ = _run(
        ["simulate", "--model", "2", "--n", "100", "--replications", "1",
         "--permutations", "9", "--methods", "mmvd", "--emit-data", str(out_dir)],
        capsys,
    )
    assert code == 0
    files = sorted(str(p) for p in out_dir.glob("model2_n100_group*.csv"))
    assert len(files) == 3
    code, out, _ = _run(["test", *files, "--permutations", "199"], capsys)
    assert code == 0
    assert json.loads(out)["p_value"] <= 0.05


def test_nulldist_identical_inputs(tmp_path, capsys):
    g = make_equispaced_grid(5)
    s = FunctionalSample(g, np.tile(g.points, (3, 1)))
    files = [_write(tmp_path / f"{j}.csv", s) for j in range(3)]
    code, out, _ = _run(["nulldist", *files, "--n-draws", "500"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert max(abs(v) for v in rep["eigenvalues"]) <= 1e-15
    assert rep["critical_value"] == pytest.approx(0.0, abs=1e-13)
    assert rep["statistic"] == 0.0


def test_nulldist_report(three_files, tmp_path, capsys):
    spec_path = tmp_path / "spec.csv"
    argv = ["nulldist", *three_files, "--n-draws", "3000", "--quantiles", "0.5,0.9,0.99",
            "--spectrum-out", str(spec_path)]
    code, out, _ = _run(argv, capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["quantiles"] == sorted(rep["quantiles"])
    assert rep["n_times_statistic"] == pytest.approx(18 * rep["statistic"])
    assert rep["reject"] == (rep["n_times_statistic"] > rep["critical_value"])
    eig = np.loadtxt(spec_path, delimiter=",", ndmin=1)
    assert eig.tolist() == rep["eigenvalues"]
    assert len(eig) == rep["truncation"]
    _, again, _ = _run(argv, capsys)
    assert again == out
    code, _, _ = _run(["nulldist", *three_files, "--quantiles", "1.5"], capsys)
    assert code == 2


def test_numerical_failure_exit_three(three_files, capsys, monkeypatch):
    def boom(*a, **k):
        raise NumericalConsistencyError("forms disagree")

    monkeypatch.setattr(cli, "permutation_test", boom)
    code, _, err = _run(["test", *three_files], capsys)
    assert code == 3 and "forms disagree" in err


def test_argument_errors_exit_two(three_files):
    for argv in (
        ["test", *three_files, "--permutations", "0"],
        ["test", *three_files, "--alpha", "1"],
        ["test", *three_files, "--kernel-gamma", "0"],
        ["simulate", "--replications", "0"],
    ):
        with pytest.raises(SystemExit) as e:
            cli.main(argv)
        assert e.value.code == 2


def test_console_entry_point(three_files):
    proc = subprocess.run(
        [sys.executable, "-m", "mmvdtest", "test", *three_files, "--permutations", "9"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    cli.validate_test_report(json.loads(proc.stdout))
