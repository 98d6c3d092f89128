from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from kinetic import cli

MAXWELLIAN = {"kind": "maxwellian", "temperature": 1.0, "density": 1.0}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def landau_cfg():
    return {"experiment": "coefficients", "seed": 0, "distribution": dict(MAXWELLIAN),
            "regime": {"tag": "coulomb", "model": "interacting", "A": 1.0}, "params": {"v": [[0.0, 0.0, 0.0]]}}


def sample_cfg():
    return {"experiment": "sample", "seed": 3, "distribution": dict(MAXWELLIAN),
            "params": {"R": 4.0, "n_samples": 20, "tau": 0.5}}


class TestRun:
    def test_landau_coefficients(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["run", str(write(tmp_path, landau_cfg())), "--out", str(out)]) == 0
        res = json.loads((out / "results.json").read_text())
        D = np.array(res["results"]["results"][0]["D"])
        np.testing.assert_allclose(D, 0.8355 * np.eye(3), atol=1e-4)
        man = json.loads((out / "manifest.json").read_text())
        assert man["config_hash"] == res["config_hash"] and man["seed"] == 0
        assert {"kinetic", "numpy", "scipy"} <= set(man["versions"])
        rows = list(csv.reader(open(out / "coefficients.csv", newline="")))
        assert rows[0][:3] == ["vx", "vy", "vz"] and len(rows) == 2

    def test_negative_temperature(self, tmp_path, capsys):
        cfg = landau_cfg()
        cfg["distribution"]["temperature"] = -1.0
        code = cli.main(["run", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "distribution.temperature" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_unknown_experiment(self, tmp_path, capsys):
        cfg = landau_cfg()
        cfg["experiment"] = "nope"
        assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
        assert "experiment" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "none.json")]) == 2

    def test_numerical_failure(self, tmp_path):
        cfg = {"experiment": "coefficients", "distribution": dict(MAXWELLIAN),
               "potential": {"profile": "yukawa", "amplitude": 1.0, "length": 1.0, "core": 0.5},
               "regime": {"tag": "finite_range", "model": "interacting", "sigma": -5.0},
               "params": {"v": [1.0, 0.0, 0.0]}}
        assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 3

    def test_deterministic_across_workers(self, tmp_path):
        path = write(tmp_path, sample_cfg())
        assert cli.main(["run", str(path), "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
        assert cli.main(["run", str(path), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
        for name in ("results.json", "counts.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override(self, tmp_path):
        path = write(tmp_path, sample_cfg())
        cli.main(["run", str(path), "--out", str(tmp_path / "a")])
        cli.main(["run", str(path), "--out", str(tmp_path / "b"), "--seed", "4"])
        assert (tmp_path / "a" / "counts.csv").read_bytes() != (tmp_path / "b" / "counts.csv").read_bytes()
        assert json.loads((tmp_path / "b" / "results.json").read_text())["seed"] == 4

    def test_rerun_from_manifest(self, tmp_path):
        path = write(tmp_path, sample_cfg())
        cli.main(["run", str(path), "--out", str(tmp_path / "a")])
        man = tmp_path / "a" / "manifest.json"
        assert cli.main(["run", str(man), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "results.json").read_bytes() == (tmp_path / "b" / "results.json").read_bytes()

    def test_bad_workers(self, tmp_path):
        assert cli.main(["run", str(write(tmp_path, sample_cfg())), "--workers", "0"]) == 2

    def test_csv_precision(self):
        assert cli._cell(0.1) == "0.10000000000000001"


class TestSweep:
    def test_values(self, tmp_path):
        cfg = landau_cfg()
        cfg["regime"]["A"] = 1.0
        out = tmp_path / "s"
        code = cli.main(["sweep", str(write(tmp_path, cfg)), "--axis", "regime.A", "--values", "1,2", "--out", str(out)])
        assert code == 0
        rows = list(csv.reader(open(out / "sweep.csv", newline="")))
        assert rows[0][:2] == ["regime.A", "status"] and len(rows) == 3
        d0 = [float(r[rows[0].index("D00")]) for r in rows[1:]]
        assert d0[1] == pytest.approx(4 * d0[0], rel=1e-12)

    def test_empty_values(self, tmp_path):
        path = write(tmp_path, landau_cfg())
        assert cli.main(["sweep", str(path), "--axis", "regime.A", "--values", ""]) == 2

    def test_bad_axis(self, tmp_path):
        path = write(tmp_path, landau_cfg())
        assert cli.main(["sweep", str(path), "--axis", "distribution.kind", "--values", "1",
                         "--out", str(tmp_path / "s")]) == 2

    def test_partial_failure_status(self, tmp_path):
        cfg = {"experiment": "coefficients", "distribution": dict(MAXWELLIAN),
               "potential": {"profile": "yukawa", "amplitude": 1.0, "length": 1.0, "core": 0.5},
               "regime": {"tag": "finite_range", "model": "interacting", "sigma": 0.01},
               "params": {"v": [1.0, 0.0, 0.0]}}
        out = tmp_path / "s"
        code = cli.main(["sweep", str(write(tmp_path, cfg)), "--axis", "regime.sigma", "--values", "0.01,-5",
                         "--out", str(out)])
        assert code == 0
        rows = list(csv.reader(open(out / "sweep.csv", newline="")))
        assert rows[1][1] == "ok" and rows[2][1].startswith("numerical_error")

    def test_sigma_gap_monotone(self, tmp_path):
        cfg = {"experiment": "coefficients", "distribution": dict(MAXWELLIAN),
               "potential": {"profile": "yukawa", "amplitude": 1.0 / (3 * np.pi), "length": 1.0, "core": 0.5},
               "regime": {"tag": "finite_range", "model": "interacting", "sigma": 0.1},
               "params": {"v": [1.0, 0.0, 0.0]}}
        out = tmp_path / "s"
        cli.main(["sweep", str(write(tmp_path, cfg)), "--axis", "regime.sigma", "--values", "0.1,0.01,0.001",
                  "--out", str(out)])
        rows = list(csv.reader(open(out / "sweep.csv", newline="")))
        gaps = [float(r[rows[0].index("rayleigh_gap")]) for r in rows[1:]]
        assert gaps[0] > gaps[1] > gaps[2]
