import csv
import io
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from margsum.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, run


def _run(capsys, *argv):
    code = run(list(argv))
    return code, capsys.readouterr().out


def _expansion_json(capsys, tmp_path, *extra):
    code, out = _run(capsys, "build-expansion", "--preset", "stoyanov", *extra)
    assert code == EXIT_OK
    path = tmp_path / "spec.json"
    path.write_text(out)
    return path, json.loads(out)


class TestBuild:
    def test_expansion_kappa_filled(self, capsys, tmp_path):
        _, data = _expansion_json(capsys, tmp_path)
        assert_allclose(data["kappa"], math.e ** 2 / 8, rtol=1e-10)

    def test_expansion_completes_spec(self, capsys, tmp_path):
        path, data = _expansion_json(capsys, tmp_path, "--kappa", "0.1")
        assert data["kappa"] == 0.1
        code, out = _run(capsys, "build-expansion", "--spec", str(path), "--kappa", "auto")
        assert code == EXIT_OK
        assert_allclose(json.loads(out)["kappa"], math.e ** 2 / 8, rtol=1e-10)

    def test_copula(self, capsys):
        code, out = _run(capsys, "build-copula", "--d", "3", "--gamma", "0.25")
        data = json.loads(out)
        assert code == EXIT_OK and data["d"] == 3 and data["gamma"]["value"] == 0.25

    def test_out_file(self, capsys, tmp_path):
        target = tmp_path / "c.json"
        assert run(["build-copula", "--out", str(target)]) == EXIT_OK
        assert capsys.readouterr().out == ""
        assert json.loads(target.read_text())["d"] == 2


class TestVerify:
    def test_stoyanov_preset(self, capsys):
        code, out = _run(capsys, "preset", "stoyanov", "--verify", "--n", "20000")
        data = json.loads(out)
        assert code == EXIT_OK and data["passed"]
        assert any(c["name"] == "kappa_max equals e^2/8" for c in data["claims"])

    def test_broken_spec_fails(self, capsys, tmp_path):
        path, data = _expansion_json(capsys, tmp_path, "--kappa", "0.1")
        data["H"]["coeffs"] = [{"n": [1, 1], "H": 1.0}]
        path.write_text(json.dumps(data))
        code, out = _run(capsys, "verify", "--spec", str(path), "--n", "20000", "--emit", "csv")
        assert code == EXIT_FAIL
        rows = list(csv.DictReader(io.StringIO(out)))
        assert any(r["passed"] == "False" for r in rows)

    def test_copula_report(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        run(["build-copula", "--d", "3", "--out", str(path)])
        code, _ = _run(capsys, "verify", "--spec", str(path), "--n", "20000")
        assert code == EXIT_OK

    def test_poly(self, capsys):
        code, out = _run(capsys, "poly", "check")
        assert code == EXIT_OK and json.loads(out)["passed"]


class TestSampleAndMatch:
    def test_zero_samples(self, capsys, tmp_path):
        path, _ = _expansion_json(capsys, tmp_path)
        code, out = _run(capsys, "sample", "--spec", str(path), "-n", "0", "--emit", "csv")
        assert code == EXIT_OK and out.strip() == "x1,x2"

    def test_seeded_bytes(self, capsys, tmp_path):
        path, _ = _expansion_json(capsys, tmp_path)
        argv = ["sample", "--spec", str(path), "-n", "500", "--seed", "9", "--emit", "csv"]
        first = _run(capsys, *argv)[1]
        assert first == _run(capsys, *argv)[1]
        assert first != _run(capsys, *argv[:-4], "--seed", "10", "--emit", "csv")[1]

    def test_match_density_grid(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        run(["build-copula", "--out", str(path)])
        code, out = _run(capsys, "match", "--copula", str(path), "--marginal", "normal:0,1", "--emit",
                         "density-grid", "--grid", "11")
        rows = np.loadtxt(io.StringIO(out), delimiter=",", skiprows=1)
        assert code == EXIT_OK and rows.shape == (121, 3) and np.all(rows[:, 2] >= 0)

    def test_match_samples(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        run(["build-copula", "--out", str(path)])
        code, out = _run(capsys, "match", "--copula", str(path), "--marginal", "normal:1,4", "--n", "2000",
                         "--emit", "samples")
        y = np.loadtxt(io.StringIO(out), delimiter=",", skiprows=1)
        assert code == EXIT_OK and y.shape == (2000, 2)
        assert np.all(np.abs(y.mean(0) - 1) < 4 * 2 / math.sqrt(2000))


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [],
        ["preset", "bogus"],
        ["sample", "--spec", "/nonexistent.json"],
        ["sample", "--spec", "x", "-n", "-3"],
        ["build-expansion"],
        ["build-copula", "--gamma", "lots"],
    ])
    def test_exit_two(self, capsys, argv):
        assert run(argv) == EXIT_USAGE
        capsys.readouterr()

    def test_malformed_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(["verify", "--spec", str(path)]) == EXIT_USAGE
        assert "bad.json" in capsys.readouterr().err
