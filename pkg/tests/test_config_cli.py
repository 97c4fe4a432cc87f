"""Config parsing strictness and end-to-end CLI runs."""

import json
from pathlib import Path

import pytest

from hjmlab.cli import main
from hjmlab.config import ConfigError, parse_scenario

MINIMAL = """
commands = ["verify-drift"]

[grids]
dt = 0.01
horizon_t = 0.5
horizon_xi = 2.0

[model]
kind = "vasicek"
"""

FULL = """
n_paths = 400
seed = 7
output_dir = "{out}"
commands = ["verify-drift", "martingale-test"]

[grids]
dt = 0.01
horizon_t = 0.5
horizon_xi = 2.0

[simulation]
maturities = [1.0, 2.0]
obs_stride = 10
mode = "risk_neutral"

[model]
kind = "vasicek"
m = 1
c = [0.008, 0.01]
delta = [-1.2, -1.0]
r = 0.02

[checks]
drift_tol = 1e-6
drift_points = 8
"""


class TestParseScenario:
    def test_minimal_doc_fills_defaults(self):
        cfg = parse_scenario(MINIMAL)
        assert cfg.n_paths == 10_000
        assert cfg.seed == 42
        assert cfg.commands == ("verify-drift",)

    def test_grid_contract_violation(self):
        doc = MINIMAL.replace("dt = 0.01", "dt = 0.01\ndxi = 0.02")
        with pytest.raises(ConfigError, match="grid contract violated"):
            parse_scenario(doc)

    def test_negative_intensity_names_invariant(self):
        doc = MINIMAL.replace('kind = "vasicek"', 'kind = "vasicek_jump"')
        doc += "\n[model.jumps]\nweights = [-1.0]\n"
        with pytest.raises(ConfigError, match="jump intensities"):
            parse_scenario(doc)

    def test_unknown_key_is_error(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_scenario("typo_key = 1\n" + MINIMAL)
        with pytest.raises(ConfigError, match="model.vol_scale"):
            parse_scenario(MINIMAL.replace('kind = "vasicek"', 'vol_scale = 1.0'))

    def test_syntax_error_carries_location(self):
        with pytest.raises(ConfigError, match="line"):
            parse_scenario("grids = [broken")

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="unknown command"):
            parse_scenario(MINIMAL.replace("verify-drift", "frobnicate"))

    def test_maturities_must_fit_horizon(self):
        doc = FULL.format(out="x").replace("[1.0, 2.0]", "[5.0]")
        with pytest.raises(ConfigError, match="horizon_xi"):
            parse_scenario(doc)


class TestCliEndToEnd:
    def write_cfg(self, tmp_path, text):
        p = tmp_path / "scenario.toml"
        p.write_text(text, encoding="utf-8")
        return p

    def test_verify_drift_exits_zero(self, tmp_path):
        cfg = self.write_cfg(tmp_path, FULL.format(out=tmp_path / "out"))
        rc = main(["verify-drift", "--config", str(cfg), "--no-plots"])
        assert rc == 0
        rep = json.loads((tmp_path / "out" / "verify-drift.json").read_text())
        assert rep["passed"] and rep["max_abs_residual"] < 1e-6
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_martingale_broken_drift_exits_one(self, tmp_path):
        doc = FULL.format(out=tmp_path / "out") + "\n"
        doc = doc.replace(
            'mode = "risk_neutral"',
            'mode = "risk_neutral"\nperturbation = 0.02',
        )
        cfg = self.write_cfg(tmp_path, doc)
        rc = main(["martingale-test", "--config", str(cfg), "--no-plots"])
        assert rc == 1
        rep = json.loads((tmp_path / "out" / "martingale-test.json").read_text())
        assert not rep["passed"] and rep["failing_cells"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = self.write_cfg(tmp_path, FULL.format(out=tmp_path / "out"))
        assert main(["martingale-test", "--config", str(cfg), "--no-plots"]) == 0
        first = (tmp_path / "out" / "martingale_cells.csv").read_bytes()
        first_json = (tmp_path / "out" / "martingale-test.json").read_bytes()
        assert main(["martingale-test", "--config", str(cfg), "--no-plots"]) == 0
        assert (tmp_path / "out" / "martingale_cells.csv").read_bytes() == first
        assert (tmp_path / "out" / "martingale-test.json").read_bytes() == first_json

    def test_threads_flag_does_not_change_bytes(self, tmp_path):
        cfg = self.write_cfg(tmp_path, FULL.format(out=tmp_path / "out"))
        assert main(["martingale-test", "--config", str(cfg), "--no-plots"]) == 0
        first = (tmp_path / "out" / "martingale_cells.csv").read_bytes()
        assert (
            main(
                [
                    "martingale-test",
                    "--config",
                    str(cfg),
                    "--no-plots",
                    "--threads",
                    "8",
                ]
            )
            == 0
        )
        assert (tmp_path / "out" / "martingale_cells.csv").read_bytes() == first

    def test_simulate_writes_contracted_csv_columns(self, tmp_path):
        doc = FULL.format(out=tmp_path / "out").replace("n_paths = 400", "n_paths = 4")
        cfg = self.write_cfg(tmp_path, doc)
        assert main(["simulate", "--config", str(cfg), "--no-plots"]) == 0
        header = (
            (tmp_path / "out" / "ensemble_curves.csv")
            .read_text()
            .splitlines()[0]
        )
        assert header == "path,t,index,xi,value"

    def test_run_executes_config_commands(self, tmp_path):
        doc = FULL.format(out=tmp_path / "out").replace("n_paths = 400", "n_paths = 200")
        cfg = self.write_cfg(tmp_path, doc)
        rc = main(["run", "--config", str(cfg), "--no-plots"])
        assert rc == 0
        summary = json.loads((tmp_path / "out" / "run_summary.json").read_text())
        assert [r["command"] for r in summary["results"]] == [
            "verify-drift",
            "martingale-test",
        ]

    def test_figures_rendered_by_default(self, tmp_path):
        doc = FULL.format(out=tmp_path / "out").replace("n_paths = 400", "n_paths = 4")
        cfg = self.write_cfg(tmp_path, doc)
        assert main(["simulate", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "figures" / "simulate_fan.png").exists()

    def test_missing_config_exits_two(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 2
