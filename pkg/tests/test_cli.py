"""Tests for run configs, the experiment commands and the command-line contract."""

import csv
import json
import logging
from pathlib import Path

import pytest

from cli.commands import cmd_couple, cmd_exit_times, cmd_phase, cmd_simulate
from cli.main import build_parser, main
from cli.run_config import load_run_config, parse_override
from services.errors import EXIT_GUARD, EXIT_OK, EXIT_PARTIAL, ArgumentError


def _read_csv(path):
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


class TestParseOverride:
    def test_integer(self):
        assert parse_override("--model.n=1000") == (["model", "n"], 1000)

    def test_list(self):
        assert parse_override("--ldp.ns=[40,80,160]") == (["ldp", "ns"], [40, 80, 160])

    def test_bare_string(self):
        assert parse_override("--exit_times.domain=band") == (["exit_times", "domain"], "band")

    def test_dashes_become_underscores(self):
        assert parse_override("--exit-times.burn-in=2.5") == (["exit_times", "burn_in"], 2.5)

    def test_boolean(self):
        assert parse_override("--simulate.lazy=true") == (["simulate", "lazy"], True)

    def test_missing_value(self):
        with pytest.raises(ArgumentError, match="section.key=value"):
            parse_override("--model.n")


class TestLoadRunConfig:
    def test_defaults(self):
        config = load_run_config(None, experiment="simulate")
        assert config.model.n == 100
        assert config.seed == 20240601
        assert config.echo()["experiment"] == "simulate"

    def test_file_then_flags_then_overrides(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('experiment = "simulate"\nseed = 3\n[model]\nn = 40\nh = 5.0\n', encoding="utf-8")
        config = load_run_config(path, ["--model.n=60"], seed=9)
        assert config.seed == 9
        assert config.model.n == 60
        assert config.model.h == 5.0

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('experiment = "phase"\n[model]\nbeta = 1.0\n', encoding="utf-8")
        with pytest.raises(ArgumentError, match="invalid run config"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArgumentError, match="cannot read"):
            load_run_config(tmp_path / "absent.toml")

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("experiment = \n", encoding="utf-8")
        with pytest.raises(ArgumentError, match="not valid TOML"):
            load_run_config(path)

    def test_override_through_scalar(self):
        with pytest.raises(ArgumentError, match="crosses the scalar"):
            load_run_config(None, ["--seed.value=1"], experiment="simulate", seed=4)

    def test_generic_rate_needs_r(self):
        with pytest.raises(ArgumentError, match="model.r"):
            load_run_config(None, ["--model.rate=tanh"], experiment="simulate")

    def test_generic_rate(self):
        config = load_run_config(None, ["--model.rate=tanh", "--model.r=0.5"], experiment="simulate")
        params = config.model.to_params()
        assert not params.is_piecewise_linear

    def test_inverted_uniform_range(self):
        with pytest.raises(ArgumentError):
            load_run_config(None, ["--simulate.init.low=3.0", "--simulate.init.high=1.0"], experiment="simulate")


class TestCommands:
    def test_zero_horizon(self, tmp_path):
        config = load_run_config(
            None, ["--simulate.horizon=0", "--model.n=20"], experiment="simulate", out=tmp_path
        )
        result = cmd_simulate(config)
        assert not result.partial
        assert _read_csv(tmp_path / "events.csv") == [["t", "neuron"]]
        rows = _read_csv(tmp_path / "trajectory.csv")
        assert len(rows) == 2
        assert float(rows[1][0]) == 0.0
        assert result.payload["events"] == 0

    def test_simulate_is_reproducible(self, tmp_path):
        outputs = []
        for name in ("first", "second"):
            config = load_run_config(
                None, ["--model.n=30", "--simulate.horizon=2"], experiment="simulate", seed=7, out=tmp_path / name
            )
            cmd_simulate(config)
            outputs.append((tmp_path / name / "events.csv").read_bytes())
        assert outputs[0] == outputs[1]
        assert outputs[0].count(b"\n") > 1

    def test_lazy_matches_eager(self, tmp_path):
        outputs = []
        for name, lazy in (("eager", "false"), ("lazy", "true")):
            config = load_run_config(
                None,
                ["--model.n=30", "--simulate.horizon=2", f"--simulate.lazy={lazy}"],
                experiment="simulate",
                seed=11,
                out=tmp_path / name,
            )
            cmd_simulate(config)
            outputs.append(_read_csv(tmp_path / name / "events.csv"))
        assert [row[1] for row in outputs[0]] == [row[1] for row in outputs[1]]

    def test_phase(self, tmp_path):
        config = load_run_config(
            None, ["--phase.resolution=4", "--phase.boundary_points=5"], experiment="phase", out=tmp_path
        )
        result = cmd_phase(config)
        assert len(_read_csv(tmp_path / "phase.csv")) == 17
        boundary = _read_csv(tmp_path / "boundary.csv")
        assert boundary[0] == ["b", "a"]
        assert len(boundary) == 6
        assert result.payload["points"] == 16
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["experiment"] == "phase"
        assert summary["files"] == ["phase.csv", "boundary.csv", "summary.json"]
        assert summary["units"]["b_max"] == "dimensionless"
        schema = json.loads((Path(__file__).parents[1] / "docs" / "summary.schema.json").read_text())
        assert set(summary) == set(schema["required"])

    def test_exit_times(self, tmp_path, caplog):
        config = load_run_config(
            None,
            ["--model.n=20", "--model.h=0.5", "--exit_times.gamma=0.3"],
            experiment="exit-times",
            out=tmp_path,
        )
        with caplog.at_level(logging.WARNING, logger="services.artifacts"):
            result = cmd_exit_times(config)
        assert not result.partial
        rows = _read_csv(tmp_path / "exit_times.csv")
        assert rows[0] == ["replica", "init_id", "tau"]
        assert len(rows) == 201
        assert {row[1] for row in rows[1:]} == {"0", "1"}
        assert result.payload["mean"] > 0
        assert "without units" not in caplog.text

    def test_exit_replicas_below_minimum(self):
        with pytest.raises(ArgumentError, match="invalid run config"):
            load_run_config(None, ["--exit_times.replicas=50"], experiment="exit-times")

    @pytest.mark.parametrize(
        ("kind", "header"),
        [
            ("u_z", ["run", "t", "lambda_bar_minus_z"]),
            ("chaos", ["run", "t", "discrepancy", "bound", "rate_gap", "rate_gap_bound"]),
            ("synchronous", ["run", "t", "discrepancy"]),
        ],
    )
    def test_couple(self, tmp_path, kind, header):
        overrides = [f"--couple.kind={kind}", "--couple.horizon=2", "--model.n=30", "--couple.drift_n=200"]
        result = cmd_couple(load_run_config(None, overrides, experiment="couple", seed=3, out=tmp_path))
        rows = _read_csv(tmp_path / "coupling.csv")
        assert rows[0] == header
        assert len(rows) > 1
        assert result.payload["kind"] == kind
        if kind == "u_z":
            assert result.payload["domination_violations"] == 0
        if kind != "chaos":
            assert len(_read_csv(tmp_path / "runs.csv")) == 2

    def test_couple_is_reproducible(self, tmp_path):
        outputs = []
        for name in ("first", "second"):
            overrides = ["--couple.kind=synchronous", "--couple.horizon=2", "--model.n=30"]
            cmd_couple(load_run_config(None, overrides, experiment="couple", seed=5, out=tmp_path / name))
            outputs.append((tmp_path / name / "coupling.csv").read_bytes())
        assert outputs[0] == outputs[1]


class TestMain:
    def test_simulate(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path), "--seed", "5", "--model.n=20", "--simulate.horizon=1"])
        assert code == EXIT_OK
        assert "wrote 3 files" in capsys.readouterr().out
        assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 5

    def test_global_flags_before_subcommand(self, tmp_path):
        code = main(["--seed", "8", "--out", str(tmp_path), "simulate", "--simulate.horizon=0"])
        assert code == EXIT_OK
        assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 8

    def test_trajectory_rate_is_bounded(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path), "--model.n=200", "--simulate.horizon=3"]) == EXIT_OK
        rates = [float(row[1]) for row in _read_csv(tmp_path / "trajectory.csv")[1:]]
        assert all(0.0 <= lam <= 1.0 for lam in rates)

    def test_meanfield(self, tmp_path):
        assert main(["meanfield", "--out", str(tmp_path), "--meanfield.table_points=101"]) == EXIT_OK
        payload = json.loads((tmp_path / "summary.json").read_text())["payload"]
        assert 0.8 <= payload["p_star"] <= 1.0
        assert payload["x_inf"] == pytest.approx(0.8)
        assert (tmp_path / "density.csv").exists()

    def test_unknown_config_key(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path), "--model.bogus=1"]) == EXIT_GUARD
        assert "invalid run config" in capsys.readouterr().err

    def test_no_positive_equilibrium(self, tmp_path):
        assert main(["ldp", "--out", str(tmp_path), "--model.h=0.5"]) == EXIT_GUARD

    def test_truncated_run(self, tmp_path):
        code = main(
            ["extinction", "--out", str(tmp_path), "--extinction.replicas=2", "--extinction.cap=1", "--model.n=20"]
        )
        assert code == EXIT_PARTIAL
        rows = _read_csv(tmp_path / "extinction.csv")
        assert rows[0] == ["replica", "last_spike", "n_events", "truncated"]
        assert all(row[3] == "true" for row in rows[1:])

    def test_extinction(self, tmp_path):
        code = main(["extinction", "--out", str(tmp_path), "--extinction.replicas=5", "--model.n=20", "--model.h=0.5"])
        assert code == EXIT_OK
        rows = _read_csv(tmp_path / "extinction.csv")
        assert [row[0] for row in rows[1:]] == ["0", "1", "2", "3", "4"]
        assert all(row[3] == "false" for row in rows[1:])

    def test_ldp_scaling(self, tmp_path):
        code = main(["ldp", "--out", str(tmp_path), "--ldp.eta=0.3", "--ldp.ns=[20,25]", "--ldp.replicas=5"])
        assert code == EXIT_OK
        rows = _read_csv(tmp_path / "scaling.csv")
        assert rows[0] == ["N", "median", "mean", "log_mean_over_N", "feasible"]
        assert [row[0] for row in rows[1:]] == ["20", "25"]
        assert all(row[4] == "true" for row in rows[1:])
        assert len(_read_csv(tmp_path / "scaling_samples.csv")) == 11
        assert json.loads((tmp_path / "scaling.json").read_text())["infeasible_ns"] == []

    def test_worker_pool_output_matches_serial(self, tmp_path):
        base = ["extinction", "--seed", "3", "--extinction.replicas=6", "--model.n=20", "--model.h=0.5"]
        assert main([*base, "--out", str(tmp_path / "serial")]) == EXIT_OK
        assert main([*base, "--out", str(tmp_path / "pool"), "--threads", "2", "--canonical"]) == EXIT_OK
        serial = (tmp_path / "serial" / "extinction.csv").read_bytes()
        assert serial == (tmp_path / "pool" / "extinction.csv").read_bytes()

    def test_unknown_argument(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["simulate", "--out", str(tmp_path), "--frobnicate"])
        assert excinfo.value.code == 2

    def test_parser_lists_experiments(self):
        help_text = build_parser().format_help()
        for name in ("simulate", "extinction", "exit-times", "meanfield", "phase", "ldp", "couple"):
            assert name in help_text
