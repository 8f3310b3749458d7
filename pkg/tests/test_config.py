"""
Tests for the layered YAML configuration.
Run with: pytest tests/test_config.py
"""
import sys
from pathlib import Path

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from sim.config import CONFIG_DIR, RECIPE_DIR, ConfigError, parse_config, parse_overrides, recipe_path
from src.experiments import FIGURE_KINDS


@pytest.fixture(autouse=True)
def no_env_output_dir(monkeypatch):
    monkeypatch.delenv("DUPGD_OUTPUT_DIR", raising=False)


def write_yaml(tmp_path, doc, name="cfg.yml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_builtin_defaults():
    cfg = parse_config()
    exp = cfg.experiment
    assert exp.scenario.n_links == 20
    assert exp.scenario.max_pair_distance_m is None
    assert exp.pgd.step_size == 0.1
    assert exp.pgd.max_iters == 1000
    assert exp.dupgd.n_layers == 40
    assert exp.train.batch_size == 64
    assert exp.p_max_w == 10.0
    assert cfg.output_dir == Path("results")
    assert cfg.seed == exp.seed == exp.train.seed == 2024


def test_shipped_defaults_file_matches_builtins():
    from_file = parse_config(CONFIG_DIR / "simulation.yml", workers=1)
    builtin = parse_config(workers=1)
    assert from_file.echo() == builtin.echo()


def test_step_size_out_of_range():
    with pytest.raises(ConfigError, match="pgd.step_size"):
        parse_config(overrides=["pgd.step_size=1.5"])


def test_flag_beats_file(tmp_path):
    path = write_yaml(tmp_path, {"run": {"seed": 5}, "scenario": {"n_links": 3}})
    assert parse_config(path).seed == 5
    cfg = parse_config(path, seed=9)
    assert cfg.seed == 9
    assert cfg.experiment.train.seed == 9
    assert cfg.experiment.scenario.n_links == 3


def test_set_override_beats_file(tmp_path):
    path = write_yaml(tmp_path, {"pgd": {"max_iters": 10}})
    cfg = parse_config(path, ["pgd.max_iters=20", "experiment.methods=[max_power, pgd]"])
    assert cfg.experiment.pgd.max_iters == 20
    assert cfg.experiment.methods == ("max_power", "pgd")


def test_unknown_key(tmp_path):
    path = write_yaml(tmp_path, {"pgd": {"stepsize": 0.1}})
    with pytest.raises(ConfigError, match="pgd.stepsize: unknown key"):
        parse_config(path)
    with pytest.raises(ConfigError, match="solver: unknown key"):
        parse_config(overrides=["solver.kind=pgd"])


def test_type_mismatch():
    with pytest.raises(ConfigError, match="pgd.max_iters: expected an integer"):
        parse_config(overrides=["pgd.max_iters=many"])
    with pytest.raises(ConfigError, match="train.redraw_deployments"):
        parse_config(overrides=["train.redraw_deployments=3"])
    with pytest.raises(ConfigError, match="pgd: expected a mapping"):
        parse_config(overrides=["pgd=7"])


def test_invalid_method_names_key():
    with pytest.raises(ConfigError, match="experiment.methods"):
        parse_config(overrides=["experiment.methods=[max_power, wmmse]"])


def test_optional_numbers():
    cfg = parse_config(overrides=["scenario.max_pair_distance_m=3", "pgd.tol=1e-9"])
    assert cfg.experiment.scenario.max_pair_distance_m == 3.0
    assert cfg.experiment.pgd.tol == 1e-9


def test_env_output_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("DUPGD_OUTPUT_DIR", str(tmp_path / "env"))
    assert parse_config().output_dir == tmp_path / "env"
    assert parse_config(output_dir=str(tmp_path / "flag")).output_dir == tmp_path / "flag"


def test_scenario_preset_flag():
    cfg = parse_config(scenario="scen2")
    assert cfg.experiment.scenario.max_pair_distance_m == 3.0
    with pytest.raises(ConfigError, match="scenario_preset"):
        parse_config(scenario="scen9")


def test_bad_log_level_and_workers():
    with pytest.raises(ConfigError, match="run.log_level"):
        parse_config(overrides=["run.log_level=LOUD"])
    with pytest.raises(ConfigError, match="run.workers"):
        parse_config(workers=0)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.yml")
    bad = tmp_path / "bad.yml"
    bad.write_text("pgd: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        parse_config(bad)
    listy = tmp_path / "list.yml"
    listy.write_text("- a\n- b\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        parse_config(listy)


def test_parse_overrides():
    assert parse_overrides(["a.b=1", "a.c=x", "d=[1, 2]"]) == {"a": {"b": 1, "c": "x"}, "d": [1, 2]}
    with pytest.raises(ConfigError, match="key.path=value"):
        parse_overrides(["pgd.step_size"])


def test_echo_leaves_out_machine_knobs():
    one = parse_config(workers=1)
    many = parse_config(workers=8)
    assert one.echo() == many.echo()
    assert "workers" not in one.echo()
    assert "progress" not in one.echo()["train"]


@pytest.mark.parametrize("name", sorted(p.stem for p in RECIPE_DIR.glob("*.yml")))
def test_recipes_load(name):
    cfg = parse_config(recipe_path(name))
    assert cfg.figure["kind"] in FIGURE_KINDS
    assert cfg.seed != 2024


def test_unknown_recipe():
    with pytest.raises(ConfigError, match="fig5"):
        recipe_path("fig99")


def test_run_progress_reaches_training():
    cfg = parse_config(None, ["run.progress=true"], workers=1)
    assert cfg.progress and cfg.experiment.progress and cfg.experiment.train.progress
    assert parse_config(workers=1).experiment.train.progress is False
    with pytest.raises(ConfigError, match="train.progress"):
        parse_config(None, ["train.progress=true"], workers=1)
    assert "progress" not in cfg.echo()["train"]


def test_progress_bars_need_a_terminal(mocker):
    from src.unfolded_net import progress_enabled

    mocker.patch("sys.stderr.isatty", return_value=False)
    assert not progress_enabled(True)
    mocker.patch("sys.stderr.isatty", return_value=True)
    assert progress_enabled(True)
    assert not progress_enabled(False)
