import json

import pytest

from src.core.errors import ConfigError
from src.core.field_model import Discipline, Scheduler
from src.utils.config import Config, ExperimentConfig, axis_values, validate_settings


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_defaults():
    config = Config()
    assert config.get("model.lambda_s") == 1.0
    assert config.get("simulation.seed") is None
    assert config.get("model.nothing", "fallback") == "fallback"
    assert config.validate_config()
    system = config.experiment().system_config()
    assert system.mu_bar == 4.0
    assert system.discipline is Discipline.FCFS


def test_file_values_override_defaults(tmp_path):
    path = write_json(tmp_path / "run.json", {"model": {"lambda_t": 1.0, "discipline": "lcfs"}})
    config = Config(path)
    assert config.get("model.lambda_t") == 1.0
    assert config.get("model.mu_bar") == 4.0
    assert config.experiment().system_config().discipline is Discipline.LCFS


def test_unknown_key_is_named(tmp_path):
    path = write_json(tmp_path / "typo.json", {"model": {"lamda_s": 2.0}})
    with pytest.raises(ConfigError) as info:
        Config(path)
    assert info.value.field == "model.lamda_s"


def test_syntax_error_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "model": {\n    "a": 1,\n  }\n}')
    with pytest.raises(ConfigError) as info:
        Config(str(path))
    assert info.value.line == 4
    assert "line 4" in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        Config("/nonexistent/run.json")


@pytest.mark.parametrize("settings, field", [
    ({"simulation": {"probes": "many"}}, "simulation.probes"),
    ({"model": {"a": True}}, "model.a"),
    ({"model": {"lambda_s": None}}, "model.lambda_s"),
    ({"run": {"kind": "plot"}}, "run.kind"),
    ({"model": {"scheduler": "token"}}, "model.scheduler"),
    ({"check": {"seeds": [1, 2.5]}}, "check.seeds[1]"),
    ({"sweep": {"lambda_t": {"start": 1, "stop": 2, "num": 3, "scale": "cubic"}}}, "sweep.lambda_t.scale"),
    ({"plots": {}}, "plots"),
])
def test_invalid_settings(settings, field):
    with pytest.raises(ConfigError) as info:
        validate_settings(settings)
    assert info.value.field == field


def test_set_is_validated():
    config = Config()
    config.set("model.lambda_s", 2.0)
    assert config.get("model.lambda_s") == 2.0
    with pytest.raises(ConfigError):
        config.set("model.lambda_s", "fast")
    with pytest.raises(ConfigError):
        config.set("lambda_s", 2.0)
    assert config.get("model.lambda_s") == 2.0


def test_sections_and_reset():
    config = Config()
    config.update_section("simulation", {"replications": 5, "seed": 42})
    assert config.get_section("simulation")["replications"] == 5
    assert config.get("simulation.probes") == 2000
    config.reset_to_defaults()
    assert config.get("simulation.seed") is None


def test_export_and_import(tmp_path):
    config = Config()
    config.set("model.scheduler", "rr")
    target = str(tmp_path / "saved.json")
    config.export_config(target)

    restored = Config()
    restored.import_config(target)
    assert restored.settings == config.settings
    assert restored.experiment().system_config().scheduler is Scheduler.ROUND_ROBIN


def test_typed_view_round_trips():
    experiment = Config().experiment()
    assert ExperimentConfig.from_settings(experiment.to_settings()) == experiment


def test_channel_rate_and_length():
    config = Config()
    config.update_section("model", {"mu": 800.0, "length": 200.0})
    assert config.experiment().system_config().mu_bar == pytest.approx(4.0)


def test_search_options_follow_optimize_section():
    config = Config()
    config.update_section("optimize", {"grid_points": 32, "delta": 0.01})
    options = config.experiment().search_options()
    assert options.grid_points == 32
    assert options.margin == 0.01
    config.set("optimize.grid_points", 2)
    with pytest.raises(ConfigError):
        config.experiment().search_options()


def test_axis_values():
    assert axis_values(None, "sweep.lambda_s") is None
    assert axis_values([1, 2], "sweep.lambda_s") == [1.0, 2.0]
    assert axis_values({"start": 0.1, "stop": 10, "num": 3}, "sweep.lambda_s") == pytest.approx([0.1, 1.0, 10.0])
    assert axis_values({"start": 1, "stop": 3, "num": 3, "scale": "linear"}, "x") == pytest.approx([1, 2, 3])
    with pytest.raises(ConfigError):
        axis_values({"start": 0, "stop": 3, "num": 3}, "x")
    with pytest.raises(ConfigError):
        axis_values({"start": 1, "num": 3}, "x")
