import json

import numpy as np
import pytest

from lamhb import cli, lut as lut_mod
from lamhb.cli import main

SIGMA = 10.4e6
D = 5e-4


def write_config(path, **blocks):
    cfg = {"schema": "lamhb/v1",
           "material": {"preset": "paper_cold_rolled_steel"}}
    cfg.update(blocks)
    path.write_text(json.dumps(cfg))
    return path


def geometry_block(n=1, gamma=None):
    block = {"n_laminations": n, "d": D, "sigma": SIGMA}
    if gamma is not None:
        block["gamma"] = gamma
    return block


class TestSelftest:
    def test_exit_zero(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "all analytic identities hold" in out


class TestConfigErrors:
    def test_malformed_json(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{nope")
        assert main(["run-hb", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["code"] == 2

    def test_wrong_schema(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"schema": "other/v9", "material": {}}))
        assert main(["run-hb", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["context"] == "schema"

    def test_unknown_key_points_at_offender(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json",
                           geometry=dict(geometry_block(), wild=1),
                           drive={"h_dc": 0, "h_ac": 1, "f_f": 50},
                           solver={"mode": "fine_hbfem"})
        assert main(["run-hb", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert "wild" in err["message"]
        assert err["context"].startswith("geometry")

    def test_gamma_and_dins_conflict(self, tmp_path, capsys):
        geom = geometry_block(gamma=0.9)
        geom["d_ins"] = 1e-6
        cfg = write_config(tmp_path / "c.json", geometry=geom,
                           drive={"h_dc": 0, "h_ac": 1, "f_f": 50},
                           solver={"mode": "fine_hbfem"})
        assert main(["run-hb", "--config", str(cfg)]) == 2


class TestCommands:
    def test_run_transient(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.json", geometry=geometry_block(),
            drive={"h_dc": 430.0, "h_ac": 86.0, "f_f": 1000.0},
            transient={"steps_per_period": 100, "n_periods": 2,
                       "newton": True},
            output={"dir": str(tmp_path / "out")})
        assert main(["run-transient", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "transient.csv").exists()
        assert (tmp_path / "out" / "mesh.txt").exists()
        assert "loss" in capsys.readouterr().out

    def test_run_hb_fine(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", geometry=geometry_block(),
            drive={"h_dc": 430.0, "h_ac": 86.0, "f_f": 1000.0},
            solver={"mode": "fine_hbfem", "m": 3},
            output={"dir": str(tmp_path / "out")})
        assert main(["run-hb", "--config", str(cfg), "--no-timestamp"]) == 0
        sol = (tmp_path / "out" / "solution.csv").read_text()
        assert sol.startswith("# lamhb v1")
        assert (tmp_path / "out" / "trace.csv").exists()

    def test_lut_gen_and_refined_hb(self, tmp_path):
        lut_path = tmp_path / "table.csv"
        cfg = write_config(
            tmp_path / "gen.json", geometry=geometry_block(),
            lut={"path": str(lut_path), "freqs": [1000.0],
                 "drive_levels": [50.0, 120.0]})
        assert main(["lut-gen", "--config", str(cfg)]) == 0
        assert lut_path.exists()
        table = lut_mod.load_lut(lut_path)
        assert 1000.0 in table.entries

        run_cfg = write_config(
            tmp_path / "run.json", geometry=geometry_block(),
            drive={"h_dc": 40.0, "h_ac": 20.0, "f_f": 1000.0},
            solver={"mode": "hom_refined_dc", "m": 3},
            lut={"path": str(lut_path), "freqs": [1000.0]},
            output={"dir": str(tmp_path / "out")})
        assert main(["run-hb", "--config", str(run_cfg),
                     "--no-timestamp"]) == 0

    def test_idempotent_outputs_without_timestamp(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", geometry=geometry_block(),
            drive={"h_dc": 430.0, "h_ac": 86.0, "f_f": 1000.0},
            solver={"mode": "fine_hbfem", "m": 2},
            output={"dir": str(tmp_path / "out")})
        args = ["run-hb", "--config", str(cfg), "--no-timestamp"]
        assert main(args) == 0
        first = (tmp_path / "out" / "solution.csv").read_bytes()
        assert main(args) == 0
        second = (tmp_path / "out" / "solution.csv").read_bytes()
        assert first == second

    def test_scenario_smoke(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", geometry=geometry_block(n=2),
            scenario={"name": "smoke", "freqs": [500.0],
                      "target_b_max": 1.0, "ac_over_dc": 0.2, "m": 3,
                      "hom_elements": 2, "lut_n_levels": 6},
            output={"dir": str(tmp_path / "out")})
        assert main(["scenario", "--config", str(cfg), "--no-timestamp",
                     "--threads", "2"]) == 0
        out = tmp_path / "out"
        assert (out / "report.csv").exists()
        assert (out / "calibration.json").exists()
        assert (out / "losses_vs_frequency.png").exists()

    def test_missing_output_dir_is_config_error(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.json", geometry=geometry_block(),
            drive={"h_dc": 1.0, "h_ac": 0.0, "f_f": 50.0},
            solver={"mode": "fine_hbfem"})
        assert main(["run-hb", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["context"] == "output.dir"
