import json
import os

import numpy as np
import pandas as pd
import pytest

from src.cli.check_suites import (check_fcfs_identity, check_lcfs_identity, check_pdf_normalization,
                                  random_fcfs_config)
from src.cli.experiment_cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, build_parser, run


UNIT_FLAGS = ["--a", "1", "--b", "1"]


def read_results(out_dir):
    return pd.read_csv(os.path.join(out_dir, "results.csv"))


def test_analytic_reference_value(tmp_path, capsys):
    out = str(tmp_path / "analytic")
    status = run(["analytic", "--discipline", "fcfs", *UNIT_FLAGS, "--lambda-s", "1", "--lambda-t", "2",
                  "--mu-bar", "4", "--out", out])
    assert status == EXIT_OK
    assert "eps = 0.6800000000" in capsys.readouterr().out

    results = read_results(out)
    assert results.loc[0, "eps_analytic"] == pytest.approx(0.68, abs=1e-12)
    assert results.loc[0, "status"] == "ok"
    with open(os.path.join(out, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["kind"] == "analytic"
    assert manifest["exit_status"] == 0
    assert set(manifest["versions"]) >= {"numpy", "scipy", "pandas"}


def test_keep_freshest_optimum(tmp_path, capsys):
    status = run(["optimize", "--discipline", "lcfs", *UNIT_FLAGS, "--mu-bar", "2", "--out", str(tmp_path)])
    assert status == EXIT_OK
    printed = capsys.readouterr().out
    assert "lambda_s* = 1," in printed
    assert "lambda_t* = inf" in printed
    assert "eps* = 0.5555555556" in printed


def test_unstable_request_is_infeasible(tmp_path, capsys):
    out = str(tmp_path / "unstable")
    status = run(["analytic", "--discipline", "fcfs", *UNIT_FLAGS, "--lambda-s", "1", "--lambda-t", "5",
                  "--mu-bar", "4", "--out", out])
    assert status == EXIT_INFEASIBLE
    assert "rho0 = 1.25" in capsys.readouterr().out
    results = read_results(out)
    assert results.loc[0, "status"] == "infeasible"
    assert pd.isna(results.loc[0, "eps_analytic"])


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": {"lamda_s": 2}}))
    assert run(["analytic", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "model.lamda_s" in capsys.readouterr().err


def test_missing_kind_prints_help(capsys):
    assert run([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().out


def test_service_flags_are_exclusive():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["analytic", "--mu-bar", "4", "--mu", "800"])


def test_channel_rate_needs_length(tmp_path):
    assert run(["analytic", "--mu", "800", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run(["analytic", "--mu", "800", "--length", "200", "--out", str(tmp_path)]) == EXIT_OK


def test_mu_bar_flag_overrides_channel_rate_in_file(tmp_path):
    path = tmp_path / "channel.json"
    path.write_text(json.dumps({"model": {"mu": 800.0, "length": 200.0}}))
    out = tmp_path / "override"
    status = run(["analytic", "--config", str(path), "--discipline", "fcfs", *UNIT_FLAGS, "--lambda-s", "1",
                  "--lambda-t", "2", "--mu-bar", "8", "--out", str(out)])
    assert status == EXIT_OK
    assert read_results(str(out)).loc[0, "eps_analytic"] == pytest.approx(3111 / 5103, abs=1e-10)
    with open(out / "config.json") as f:
        saved = json.load(f)
    assert saved["model"]["mu"] is None
    assert saved["model"]["mu_bar"] == 8.0


@pytest.fixture
def sweep_config(tmp_path):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({
        "model": {"a": 1, "b": 1, "mu_bar": 4, "discipline": "fcfs"},
        "sweep": {"lambda_s": [1.0, 2.0], "lambda_t": [1.0, 3.0]},
        "output": {"out_dir": str(tmp_path / "sweep_out")},
    }))
    return str(path)


def test_sweep_surface(sweep_config, tmp_path):
    assert run(["sweep", "--config", sweep_config]) == EXIT_OK
    out = tmp_path / "sweep_out"
    with open(out / "surface.csv") as f:
        header = f.readline().strip()
    assert header == "lambda_s,lambda_t,eps,status"

    surface = pd.read_csv(out / "surface.csv")
    assert list(zip(surface.lambda_s, surface.lambda_t)) == [(1.0, 1.0), (1.0, 3.0), (2.0, 1.0), (2.0, 3.0)]
    assert surface.loc[3, "status"] == "infeasible" and pd.isna(surface.loc[3, "eps"])
    assert len(read_results(str(out))) == 4


def test_saved_config_regenerates_results(sweep_config, tmp_path):
    out = tmp_path / "sweep_out"
    assert run(["sweep", "--config", sweep_config]) == EXIT_OK
    first = (out / "results.csv").read_bytes()
    saved = tmp_path / "saved.json"
    saved.write_bytes((out / "config.json").read_bytes())
    assert run(["sweep", "--config", str(saved)]) == EXIT_OK
    assert (out / "results.csv").read_bytes() == first


def test_simulate_records_generated_seed(tmp_path, capsys):
    out = tmp_path / "sim"
    status = run(["simulate", *UNIT_FLAGS, "--lambda-s", "1", "--lambda-t", "2", "--mu-bar", "4",
                  "--sim-length", "20", "--horizon", "100", "--replications", "2", "--probes", "50",
                  "--out", str(out)])
    assert status == EXIT_OK
    assert "No seed given" in capsys.readouterr().out
    with open(out / "config.json") as f:
        saved = json.load(f)
    assert isinstance(saved["simulation"]["seed"], int)
    results = read_results(str(out))
    assert results.loc[0, "eps_analytic"] == pytest.approx(0.68, abs=1e-12)
    assert 0.0 < results.loc[0, "eps_sim_mean"] < 1.0
    assert results.loc[0, "seed"] == saved["simulation"]["seed"]


class TestCheckSuites:
    def test_fcfs_identity(self):
        assert check_fcfs_identity(np.random.default_rng(1), draws=100).passed

    def test_lcfs_identity(self):
        assert check_lcfs_identity(np.random.default_rng(2), draws=100).passed

    def test_density_normalization(self):
        assert check_pdf_normalization(np.random.default_rng(3), draws=10).passed

    def test_random_configurations_are_stable(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            config, _ = random_fcfs_config(rng)
            assert config.rho0 < 1.0


@pytest.mark.slow
def test_identities_suite(tmp_path):
    assert run(["check", "--suite", "identities", "--out", str(tmp_path)]) == EXIT_OK


@pytest.mark.slow
def test_channel_equivalence_suite(tmp_path):
    assert run(["check", "--suite", "appendix-a", "--out", str(tmp_path)]) == EXIT_OK
