import json
import shutil
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from qstab.cli import explain_scenario, main, run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SCHEMA = json.loads(resources.files("qstab").joinpath("schemas/summary.schema.json").read_text())


def write(tmp_path, data, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def strip_meta(summary):
    return {k: v for k, v in summary.items() if k != "metadata"}


@pytest.fixture
def d42_small(tmp_path):
    data = json.loads((SCENARIOS / "dicke4_random.json").read_text())
    data["trials"] = {"trials": 12, "steps": 60, "gamma": 1e-6, "checkpoints": [10, 60], "min_fraction": 0.0}
    return write(tmp_path, data)


def test_d42_cyclic(tmp_path):
    code, summary = run_scenario(SCENARIOS / "dicke4_cyclic.json", out=str(tmp_path))
    assert code == 0
    assert summary["qls"]["decision"] is True
    conv = summary["convergence"]
    assert conv["converged"] and conv["final_dist"] < 1e-8
    assert conv["c_estimate"] < 0
    assert conv["max_dist_increase"] <= 1e-12
    jsonschema.validate(summary, SCHEMA)
    csv = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert csv[0] == "step,map_index,trace_dist,lyapunov"
    assert json.loads((tmp_path / "summary.json").read_text())["scenario"] == "dicke4_cyclic"


def test_w3_emits_witness(tmp_path):
    code, summary = run_scenario(SCENARIOS / "w3_check.json", out=str(tmp_path))
    assert code == 0
    q = summary["qls"]
    assert q["decision"] is False and q["intersection_dim"] == 2
    assert q["witness"] is not None
    jsonschema.validate(summary, SCHEMA)
    assert summary["parent_hamiltonian"]["unique"] is False


def test_ghz4_check(tmp_path):
    code, summary = run_scenario(SCENARIOS / "ghz4_check.json", out=str(tmp_path))
    assert code == 0 and summary["qls"]["decision"] is False


def test_identity_one_map(tmp_path):
    code, summary = run_scenario(SCENARIOS / "identity_one_map.json", out=str(tmp_path))
    assert code == 0
    assert summary["convergence"]["converged"] and summary["convergence"]["steps"] == 0
    jsonschema.validate(summary, SCHEMA)


def test_not_qls_mandatory_exits_3(tmp_path):
    data = json.loads((SCENARIOS / "w3_check.json").read_text())
    data.update(task="STABILIZE_CYCLIC", stop={"max_steps": 10, "mandatory": True})
    code, summary = run_scenario(write(tmp_path, data), out=str(tmp_path))
    assert code == 3 and summary["exit_code"] == 3
    jsonschema.validate(summary, SCHEMA)


def test_unreached_tolerance_exits_3(tmp_path):
    data = json.loads((SCENARIOS / "dicke4_cyclic.json").read_text())
    data["stop"] = {"max_steps": 3, "dist_tol": 1e-12, "mandatory": True}
    data["initial"] = {"kind": "haar", "count": 1}
    code, _ = run_scenario(write(tmp_path, data), out=str(tmp_path))
    assert code == 3


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(neighborhoods=[]),
    lambda d: d.update(neighborhoods=[[0, 7]]),
    lambda d: d.update(task="FLY"),
    lambda d: d.pop("target"),
    lambda d: d.update(target={"kind": "dicke", "params": {"n": 3, "k": 1}}),
    lambda d: d.update(maps=[{"dims": [2], "kraus": [[[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]]}]),
])
def test_invalid_scenarios_exit_2(tmp_path, mutate, capsys):
    data = json.loads((SCENARIOS / "dicke4_cyclic.json").read_text())
    mutate(data)
    code, summary = run_scenario(write(tmp_path, data), out=str(tmp_path))
    assert code == 2 and summary is None
    assert "error:" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"task": "QLS_CHECK",\n "system": }')
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == 2


def test_explain_outputs():
    code, text = explain_scenario(SCENARIOS / "dicke4_cyclic.json")
    assert code == 0
    assert "neighborhood support dims: [4, 4]" in text
    assert "QLS decision (pure): True" in text
    assert "plan: 2 map(s) per cycle" in text
    assert "c estimate:" in text


def test_explain_identity_plan():
    code, text = explain_scenario(SCENARIOS / "identity_one_map.json")
    assert code == 0 and "plan: 1 map(s) per cycle" in text


def test_explain_enlarged_neighborhoods(tmp_path):
    data = json.loads((SCENARIOS / "gibbs5_rates.json").read_text())
    data["task"] = "QLS_CHECK"
    code, text = explain_scenario(write(tmp_path, data))
    assert code == 0
    assert "enlarged neighborhoods N0_j: [[0, 1, 2], [0, 1, 2, 3], [1, 2, 3, 4], [2, 3, 4]]" in text


def test_main_prints_line(tmp_path, capsys):
    assert main(["run", str(SCENARIOS / "w3_check.json"), "--out", str(tmp_path)]) == 0
    assert "qls=False" in capsys.readouterr().out


def test_jobs_must_be_positive(capsys):
    assert main(["run", str(SCENARIOS / "w3_check.json"), "--jobs", "0"]) == 2


def test_random_schedule_deterministic_across_jobs(tmp_path, d42_small):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    ca, a = run_scenario(d42_small, jobs=1, out=str(a_dir))
    cb, b = run_scenario(d42_small, jobs=2, out=str(b_dir))
    assert ca == cb == 0
    assert strip_meta(a) == strip_meta(b)
    assert (a_dir / "trajectory.csv").read_text() == (b_dir / "trajectory.csv").read_text()
    jsonschema.validate(a, SCHEMA)


def test_seed_override_changes_trials(tmp_path, d42_small):
    _, a = run_scenario(d42_small, out=str(tmp_path / "a"))
    _, b = run_scenario(d42_small, seed=99, out=str(tmp_path / "b"))
    assert b["seed"] == 99
    assert a["convergence"]["final_dist"] != b["convergence"]["final_dist"]


def test_scenario_relative_output_dir(tmp_path):
    shutil.copy(SCENARIOS / "w3_check.json", tmp_path / "w3.json")
    code, _ = run_scenario(tmp_path / "w3.json")
    assert code == 0
    assert (tmp_path / "out" / "w3_check" / "summary.json").exists()
