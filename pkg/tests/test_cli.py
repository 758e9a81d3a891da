from __future__ import annotations

import csv
import json

import pytest

from dppsim.cli import ExperimentConfig, main
from dppsim.errors import ConfigurationError
from dppsim.model import builtin_scenario, save_scenario, scenario_hash
from dppsim.simulator import Trace


def _json(path):
    return json.loads(path.read_text())


def test_run_power_min_exit_zero(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "--scenario", "power-min", "--V", "10", "--T", "1000000", "--out", str(out)]) == 0
    summ = _json(out / "summary.json")
    assert summ["scenario_hash"] == scenario_hash(builtin_scenario("power-min"))
    assert summ["runs"][0]["seed"] == 1
    assert _json(out / "bounds.json")["passed"]
    assert "PASS" in capsys.readouterr().out


def test_negative_V_exit_two(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "power-min", "V": -1, "T": 100}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "V" in capsys.readouterr().err


def test_missing_scenario_exit_two(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.json"), "--T", "10"]) == 2
    assert "scenario" in capsys.readouterr().err


@pytest.mark.parametrize(
    "payload,field",
    [({"scenario": "power-min", "T": 0}, "T"), ({"scenario": "power-min", "colour": 1}, "colour"), ({"T": 5}, "scenario")],
)
def test_config_errors_name_field(tmp_path, capsys, payload, field):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(payload))
    assert main(["run", "--config", str(cfg)]) == 2
    assert field in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{oops")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert "config" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "power-min", "V": [5], "T": 5000, "seed": 3}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    summ = _json(out / "summary.json")
    assert summ["config"]["seed"] == 4 and summ["runs"][0]["V"] == 5


def test_unstable_run_exit_one(tmp_path):
    args = ["run", "--scenario", "power-min", "--controller", "fixed-action", "--action", "idle", "--T", "1000"]
    assert main(args + ["--out", str(tmp_path)]) == 1


def test_fixed_action_needs_action(tmp_path):
    assert main(["run", "--scenario", "power-min", "--controller", "fixed-action", "--out", str(tmp_path)]) == 2


def test_omega_only_run(tmp_path):
    out = tmp_path / "w"
    assert main(["run", "--scenario", "bursty-1q", "--controller", "omega-only", "--epsilon", "0.5",
                 "--T", "20000", "--out", str(out)]) == 0
    assert _json(out / "summary.json")["runs"][0]["V"] is None
    assert main(["run", "--scenario", "bursty-1q", "--controller", "omega-only", "--epsilon", "9",
                 "--T", "20", "--out", str(out)]) == 2


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(scenario="constrained-2q", V=[3.0], T=5000, seed=9, trace_csv=True, out=str(tmp_path / "a"))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    reloaded = ExperimentConfig.from_dict(json.loads(path.read_text()))
    assert reloaded == cfg
    assert main(["run", "--config", str(path)]) == 0
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "trace-9.csv").read_bytes()
    b = (tmp_path / "b" / "trace-9.csv").read_bytes()
    assert a == b


def test_validate_rejects(tmp_path):
    with pytest.raises(ConfigurationError, match="controller"):
        ExperimentConfig(scenario="power-min", controller="greedy").validate()
    with pytest.raises(ConfigurationError, match="ensemble"):
        ExperimentConfig(scenario="power-min", ensemble=0).validate()


def test_sweep(tmp_path, caplog):
    out = tmp_path / "s"
    assert main(["sweep", "--scenario", "power-min", "--V", "1,10,10,100", "--T", "200000", "--out", str(out)]) == 0
    assert "duplicate" in caplog.text
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["V"]) for r in rows] == [1, 10, 100]
    gaps = [float(r["gap"]) for r in rows]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    meta = _json(out / "sweep.json")
    assert meta["scenario_hash"] == scenario_hash(builtin_scenario("power-min")) and meta["seed"] == 1


def test_sweep_single_value_exit_two(tmp_path):
    assert main(["sweep", "--scenario", "power-min", "--V", "5", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--scenario", "power-min", "--V", "5,5", "--out", str(tmp_path)]) == 2


def test_oracle_command(tmp_path, capsys):
    assert main(["oracle", "--scenario", "power-min", "--out", str(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["epsilon_max"] == pytest.approx(0.5) and rep["y0_opt"] == pytest.approx(0.5)
    assert [c["epsilon"] for c in rep["curve"]] == pytest.approx([0.0, 0.5])
    assert main(["oracle", "--scenario", "power-min", "--eps-grid", "0,0.25,0.6", "--out", str(tmp_path / "g")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert [c["y0_opt"] for c in rep["curve"]][2] is None


def test_oracle_infeasible_exit_zero(tmp_path, capsys):
    path = tmp_path / "over.json"
    path.write_text(json.dumps({
        "K": 1, "M": 0,
        "omega": [{"id": "w", "prob": 1.0}],
        "actions": {"w": [{"id": "x", "a": [2], "b": [1], "y": [0]}]},
    }))
    assert main(["oracle", "--scenario", str(path), "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["feasible"] is False
    assert main(["oracle", "--scenario", str(tmp_path / "missing.json")]) == 2


def test_verify_command(tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--scenario", "constrained-2q", "--V", "10", "--T", "20000", "--trace-csv",
                 "--out", str(out)]) == 0
    trace = out / "trace-1.csv"
    assert main(["verify", "--trace", str(trace), "--scenario", "constrained-2q", "--out", str(tmp_path / "v")]) == 0
    assert _json(tmp_path / "v" / "moments.json")["passed"]
    assert main(["verify", "--trace", str(trace), "--scenario", "power-min", "--out", str(tmp_path / "v")]) == 2
    assert main(["verify", "--trace", str(tmp_path / "none.csv"), "--scenario", "power-min"]) == 2


def test_fixtures_command(tmp_path):
    assert main(["fixtures", "--out", str(tmp_path)]) == 0
    golden = _json(tmp_path / "golden.json")
    assert golden["power-min"]["epsilon_max"] == pytest.approx(0.5)
    model = builtin_scenario("bursty-1q")
    save_scenario(model, tmp_path / "copy.json")
    assert (tmp_path / "bursty-1q.json").read_text() == (tmp_path / "copy.json").read_text()


def test_trace_csv_loadable(tmp_path):
    out = tmp_path / "r"
    main(["run", "--scenario", "bursty-1q", "--V", "2", "--T", "500", "--trace-csv", "--seed", "5", "--out", str(out)])
    tr = Trace.from_csv(out / "trace-5.csv", builtin_scenario("bursty-1q"))
    assert tr.T == 500 and tr.seed == 5
