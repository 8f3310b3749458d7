"""
End-to-end tests for the command-line entry point on tiny configs.
Run with: pytest tests/test_cli.py
"""
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from sim import run_sim
from sim.artifacts import make_meta, read_csv, read_json, write_json
from sim.config import parse_config
from src.channel_model import ChannelMatrix
from src.experiments import FigureOutput
from src.gradcheck import GradcheckResult


TINY = [
    "--set", "scenario.n_links=3",
    "--set", "experiment.n_realizations=3",
    "--set", "pgd.max_iters=20",
    "--set", "train.n_batches=2",
    "--set", "train.batch_size=2",
    "--set", "train.online_steps=2",
    "--set", "dupgd.n_layers=3",
    "--workers", "1",
]


@pytest.fixture(autouse=True)
def no_env_output_dir(monkeypatch):
    monkeypatch.delenv("DUPGD_OUTPUT_DIR", raising=False)


def run(tmp_path, *args):
    return run_sim.main(["--output-dir", str(tmp_path), *TINY, *args])


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run_sim.main(["frobnicate"])
    assert exc.value.code == 2
    assert run_sim.dispatch("frobnicate", parse_config(workers=1)) == 2


def test_config_error_exits_one(tmp_path):
    assert run(tmp_path, "--set", "pgd.step_size=1.5", "pgd") == 1
    assert run_sim.main(["--config", "x.yml", "reproduce", "fig5"]) == 1
    assert run_sim.main(["reproduce", "fig99"]) == 1


def test_runtime_value_error_exits_one(mocker):
    mocker.patch.dict(run_sim.HANDLERS, {"pgd": mocker.Mock(side_effect=ValueError("bad channel"))})
    assert run_sim.dispatch("pgd", parse_config(workers=1)) == 1


def test_gradcheck_exit_codes(tmp_path, mocker):
    ok = GradcheckResult("grad_rho", 4, 1e-9, "n=2", 1e-5)
    bad = GradcheckResult("backward", 4, 1e-2, "scalar_step K=3", 1e-4)
    mocker.patch("sim.run_sim.run_all", return_value=[ok])
    assert run(tmp_path, "gradcheck") == 0
    mocker.patch("sim.run_sim.run_all", return_value=[ok, bad])
    assert run(tmp_path, "gradcheck") == 1
    doc = read_json(tmp_path / "gradcheck" / "gradcheck.json")
    assert [r["passed"] for r in doc["results"]] == [True, False]
    assert doc["meta"]["tool"] == "dupgd-sim"


def test_pgd_writes_result_and_trajectory(tmp_path):
    assert run(tmp_path, "pgd") == 0
    doc = read_json(tmp_path / "pgd" / "pgd_result.json")
    assert doc["iterations_run"] == 20
    assert len(doc["p_final_w"]) == 3
    assert doc["meta"]["seed"] == 2024
    traj = read_csv(tmp_path / "pgd" / "trajectory.csv")
    assert list(traj.columns) == ["iteration", "sum_rate"]
    assert len(traj) == 20
    assert traj["sum_rate"].iloc[-1] == pytest.approx(doc["sum_rate_final"], rel=1e-9)


def test_pgd_on_channel_fixture(tmp_path):
    fixture = tmp_path / "channel.json"
    write_json(fixture, ChannelMatrix(np.array([[2e-8]]), 2e-10).to_dict(), make_meta(0, {}))
    assert run(tmp_path, "pgd", "--channel", str(fixture)) == 0
    doc = read_json(tmp_path / "pgd" / "pgd_result.json")
    assert doc["p_final_w"] == [10.0]
    assert doc["sum_rate_final"] == pytest.approx(np.log2(1001.0))


def test_artifacts_are_byte_identical_across_runs(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(first, "--set", "experiment.methods=[max_power, pgd]", "evaluate") == 0
    assert run(second, "--set", "experiment.methods=[max_power, pgd]", "--workers", "2", "evaluate") == 0
    for name in ("report.json", "summary.csv", "sum_rate_cdf.csv", "mean_rate_increase.csv"):
        assert (first / "evaluate" / name).read_bytes() == (second / "evaluate" / name).read_bytes()


def test_evaluate_tables(tmp_path):
    assert run(tmp_path, "evaluate") == 0
    out = tmp_path / "evaluate"
    summary = read_csv(out / "summary.csv")
    assert list(summary["method"]) == ["max_power", "pgd", "dupgd_online", "dupgd_offline"]
    increase = read_csv(out / "mean_rate_increase.csv").set_index("method")
    assert increase.loc["max_power", "mean_rate_increase"] == 0.0
    header = (out / "summary.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("# tool=dupgd-sim version=")
    assert "seed=2024" in header
    config = json.loads(header.split("config=", 1)[1])
    assert config["scenario"]["n_links"] == 3


def test_train_then_evaluate_with_params(tmp_path):
    assert run(tmp_path, "train") == 0
    params = read_json(tmp_path / "train" / "params.json")
    assert params["schema"] == "dupgd.params/v1"
    assert params["n_layers"] == 3
    assert len(read_csv(tmp_path / "train" / "history.csv")) == 2

    methods = ["--set", "experiment.methods=[dupgd_offline]"]
    assert run(tmp_path, *methods, "evaluate") == 0
    retrained = (tmp_path / "evaluate" / "report.json").read_bytes()
    assert run(tmp_path, *methods, "evaluate", "--params", str(tmp_path / "train" / "params.json")) == 0
    assert (tmp_path / "evaluate" / "report.json").read_bytes() == retrained


def test_sweep_parses_values(tmp_path, mocker):
    sweep = mocker.patch("sim.run_sim.sensitivity_sweep",
                         return_value=pd.DataFrame({"axis": ["n_links"], "value": [5]}))
    assert run(tmp_path, "sweep", "--axis", "n_links", "--values", "5,10") == 0
    assert sweep.call_args.args[1:] == ("n_links", [5, 10])
    assert (tmp_path / "sweep" / "sweep.csv").is_file()


def test_sweep_rejects_unknown_axis(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "sweep", "--axis", "bandwidth", "--values", "1")
    assert exc.value.code == 2


def test_reproduce_fig5(tmp_path):
    assert run(tmp_path, "reproduce", "fig5") == 0
    table = read_csv(tmp_path / "fig5" / "fig5.csv")
    assert list(table.columns) == ["scenario", "method", "mean_rate_increase", "relative_increase_pct"]
    for scenario in ("scen1", "scen2"):
        rows = table[table.scenario == scenario]
        assert sorted(rows["method"]) == ["dupgd_offline", "dupgd_online", "max_power", "pgd"]
    doc = read_json(tmp_path / "fig5" / "fig5.json")
    assert doc["kind"] == "mean_rate_increase"
    assert doc["meta"]["seed"] == 505


def test_reproduce_writes_every_table(tmp_path, mocker):
    frame = pd.DataFrame({"method": ["pgd"], "value": [1.0], "cdf": [1.0]})
    mocker.patch("sim.run_sim.run_figure",
                 return_value=FigureOutput({"fig6": frame, "fig6_summary": frame}, {"note": 1}))
    assert run(tmp_path, "reproduce", "fig6") == 0
    assert (tmp_path / "fig6" / "fig6.csv").is_file()
    assert (tmp_path / "fig6" / "fig6_summary.csv").is_file()


def test_reproduce_fig3_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(first, "reproduce", "fig3") == 0
    assert run(second, "--workers", "2", "reproduce", "fig3") == 0
    for name in ("fig3.csv", "fig3.json"):
        assert (first / "fig3" / name).read_bytes() == (second / "fig3" / name).read_bytes()
    table = read_csv(first / "fig3" / "fig3.csv")
    assert table["cdf"].between(0, 1).all()
