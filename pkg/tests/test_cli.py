import json
import os
import subprocess
import sys

import numpy as np
import pytest

from noma_beamkit import ChannelSet, PowerBudget, QosSpec, Scenario
from noma_beamkit.cli import main
from noma_beamkit.model import save_scenario, scenario_to_dict


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_fig1_case0(capsys):
    code, out, _ = run(["fig1", "--case", "0"], capsys)
    assert code == 0
    case = json.loads(out)["cases"][0]
    assert case["winner"] == "Strategy II" and case["matches_table"]
    assert case["sic_users"] == []
    beam = np.array([complex(x["re"], x["im"]) for x in case["beam"]])
    np.testing.assert_allclose(np.abs(beam) / np.linalg.norm(beam), [0.7071, 0.7071], atol=1e-3)


def test_oracle_check_ortho2(capsys):
    code, out, _ = run(["oracle-check", "--case", "ortho2", "--oracle-resolution", "120"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["resolution"] == "120x120x108"
    assert len(payload["subsets"]) == 4
    assert payload["max_abs_delta_bpcu"] <= 0.02


def test_solve_scenario_file(tmp_path, capsys):
    rng = np.random.default_rng(0)
    H = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    sc = Scenario(ChannelSet(H, rng.standard_normal(3) + 1j * rng.standard_normal(3), 1e-2),
                  PowerBudget(1.0, 1.0), QosSpec.uniform(2))
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    code, out, _ = run(["solve", "--scenario", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["best_strategy"] in ("StrategyI", "StrategyII")
    assert len(payload["strategy_two"]["subsets"]) == 4
    assert payload["strategy_two"]["rate_bpcu"] >= payload["strategy_one"]["rate_bpcu"] - 1e-6
    target = tmp_path / "o.json"
    assert run(["solve", "--scenario", str(path), "--out", str(target)], capsys)[0] == 0
    assert target.read_text() == out
    code, out, _ = run(["certify", "--scenario", str(path)], capsys)
    assert code == 0
    subsets = json.loads(out)["subsets"]
    assert all(s["status"] == "Optimal" and "residuals" in s for s in subsets)


def test_more_users_than_antennas_fails_cleanly(tmp_path, capsys):
    d = scenario_to_dict(Scenario(ChannelSet(np.eye(2), [1, 0], 1e-3), PowerBudget(1, 1), QosSpec.uniform(2)))
    d["h"].append(d["h"][0])
    d["k"] = 3
    d["rates_bpcu"] = [1.0, 1.0, 1.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    code, out, err = run(["solve", "--scenario", str(path)], capsys)
    assert code != 0 and out == ""
    error = json.loads(err)["error"]
    assert error["type"] == "ValidationError"
    assert "K exceeds N" in error["message"]


def test_input_errors(capsys):
    code, _, err = run(["fig1", "--case", "7"], capsys)
    assert code == 2 and json.loads(err)["error"]["type"] == "UnknownCase"
    code, _, err = run(["solve", "--scenario", "/nonexistent.json"], capsys)
    assert code == 2 and json.loads(err)["error"]["type"] == "MissingFile"
    code, _, err = run(["solve"], capsys)
    assert code == 2 and json.loads(err)["error"]["type"] == "MissingInput"


def _cli(args, env=None):
    full_env = dict(os.environ)
    full_env.pop("NOMA_BEAMKIT_SEED", None)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "noma_beamkit", *args], capture_output=True, env=full_env)


def test_repeat_runs_are_byte_identical_and_env_seed_is_used():
    a = _cli(["solve", "--case", "3"])
    b = _cli(["solve", "--case", "3"])
    assert a.returncode == 0 and a.stdout == b.stdout
    assert json.loads(a.stdout)["seed"] == 0
    env = _cli(["solve", "--case", "3"], {"NOMA_BEAMKIT_SEED": "17"})
    assert json.loads(env.stdout)["seed"] == 17
    flag = _cli(["solve", "--case", "3", "--seed", "5"], {"NOMA_BEAMKIT_SEED": "17"})
    assert json.loads(flag.stdout)["seed"] == 5
    bad = _cli(["solve", "--case", "3"], {"NOMA_BEAMKIT_SEED": "x"})
    assert bad.returncode == 2 and json.loads(bad.stderr)["error"]["type"] == "BadSeed"


def test_sweep_smoke(capsys):
    code, out, _ = run(["sweep", "--sweep", "p0", "--grid", "24:26:2", "--trials", "2"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "sweep_var,value,strategy,mean_rate_bpcu,stderr,n_trials,n_failures,rank_one_fraction"
    assert len(lines) == 1 + 4
    code, out, _ = run(["sweep", "--sweep", "k", "--grid", "2:3:1", "--trials", "1"], capsys)
    assert code == 0
    assert [line.split(",")[1] for line in out.strip().splitlines()[1:]] == ["2", "2", "3", "3"]
    code, _, err = run(["sweep", "--sweep", "p0", "--grid", "1:2", "--trials", "1"], capsys)
    assert code == 2 and json.loads(err)["error"]["type"] == "BadGrid"
    with pytest.raises(SystemExit):
        main(["sweep", "--sweep", "snr"])
