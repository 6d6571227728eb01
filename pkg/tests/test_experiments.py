import csv
import io
import math

import numpy as np
import pytest

from noma_beamkit import dbm_to_watts
from noma_beamkit.experiments import (
    CASES,
    CSV_COLUMNS,
    DeploymentConfig,
    DeterministicCase,
    aggregate,
    fig1_scenario,
    get_case,
    parse_grid,
    rows_to_csv,
    run_case,
    run_sweep,
    run_trial,
    run_trials,
    sample_deployment,
    sweep_configs,
)


def test_deployment_is_deterministic_per_trial():
    cfg = DeploymentConfig(master_seed=7)
    a, b = sample_deployment(cfg, 3), sample_deployment(cfg, 3)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.channels.digest() == b.channels.digest()
    assert sample_deployment(cfg, 4).channels.digest() != a.channels.digest()
    assert sample_deployment(DeploymentConfig(master_seed=8), 3).channels.digest() != a.channels.digest()


def test_geometry_and_path_loss_statistics():
    cfg = DeploymentConfig(master_seed=1)
    gains, g_gains = [], []
    for t in range(5000):
        dep = sample_deployment(cfg, t)
        d = dep.distances
        assert np.all(d >= cfg.min_distance_m) and np.all(d <= 3 * math.sqrt(2) + 1e-12)
        assert np.all(np.abs(dep.positions) <= 3.0)
        # undo the d^-3 power loss; what remains is CN(0, 1)
        gains.extend((np.abs(dep.channels.H) ** 2 * d[None, :] ** 3).ravel())
        g_gains.extend(np.abs(dep.channels.g) ** 2)  # secondary at distance 1
    assert len(gains) >= 10_000
    assert np.mean(gains) == pytest.approx(1.0, rel=0.03)
    assert np.mean(g_gains) == pytest.approx(1.0, rel=0.03)
    assert dep.channels.noise_power == pytest.approx(dbm_to_watts(-94))


def test_config_validation():
    with pytest.raises(ValueError):
        DeploymentConfig(square_edge_m=-1)
    with pytest.raises(ValueError):
        DeploymentConfig(min_distance_m=3.0)
    with pytest.raises(ValueError):
        DeploymentConfig(k_users=0)


def test_trial_record_contents():
    rec = run_trial(DeploymentConfig(master_seed=2), 0)
    assert not rec.failed
    assert rec.seed == (2, 0)
    assert rec.rate_strategy2 >= rec.rate_strategy1 - 1e-6
    assert len(rec.solver_health) == 4
    assert set(rec.classifications) == {"[]", "[1]", "[2]", "[1, 2]"}


def test_parallel_trials_match_serial():
    cfg = DeploymentConfig(master_seed=3)
    serial = run_trials(cfg, 4, threads=1)
    parallel = run_trials(cfg, 4, threads=2)
    assert [r.rate_strategy2 for r in serial] == [r.rate_strategy2 for r in parallel]
    assert [r.channel_digest for r in serial] == [r.channel_digest for r in parallel]


def test_parse_grid():
    assert parse_grid("20:30:2") == [20, 22, 24, 26, 28, 30]
    assert parse_grid("2:4:1") == [2, 3, 4]
    assert parse_grid("0:1:0.25") == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])
    for bad in ("1:2", "a:b:c", "3:1:1", "0:1:0"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_sweep_configs():
    base = DeploymentConfig()
    assert [c.p0_dbm for c in sweep_configs(base, "p0", [20, 25])] == [20.0, 25.0]
    assert [c.k_users for c in sweep_configs(base, "k", [2, 3])] == [2, 3]
    with pytest.raises(ValueError):
        sweep_configs(base, "snr", [1])


def test_csv_schema_and_reproducibility():
    cfg = DeploymentConfig(master_seed=5)
    rows = run_sweep(cfg, "p0", [20.0, 30.0], 3, "full")
    text = rows_to_csv(rows)
    assert text == rows_to_csv(run_sweep(cfg, "p0", [20.0, 30.0], 3, "full"))
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0].keys()) == CSV_COLUMNS
    assert [r["strategy"] for r in parsed] == ["StrategyI", "StrategyII"] * 2
    for r in parsed:
        assert int(r["n_trials"]) + int(r["n_failures"]) == 3
        if r["strategy"] == "StrategyI":
            assert r["rank_one_fraction"] == "nan"
        else:
            assert 0.0 <= float(r["rank_one_fraction"]) <= 1.0
    k_rows = run_sweep(cfg, "k", [2], 2, "simplified")
    assert k_rows[0]["value"] == 2 and isinstance(k_rows[0]["value"], int)


def test_aggregate_counts_failures():
    rec = run_trial(DeploymentConfig(master_seed=4), 0)
    bad = run_trial(DeploymentConfig(master_seed=4), 1)
    bad.failed = True
    rows = aggregate("p0", 30.0, [rec, bad])
    assert rows[1]["n_trials"] == 1 and rows[1]["n_failures"] == 1
    assert rows[1]["mean_rate_bpcu"] == rec.rate_strategy2
    assert rows[1]["stderr"] == 0.0


def test_case_table_and_lookup():
    assert list(CASES) == ["1", "2", "3-1", "3-2", "4", "5", "0"]
    assert get_case("3") is CASES["3-1"]
    assert get_case(0).case_id == "0"
    with pytest.raises(KeyError):
        get_case("9")
    with pytest.raises(ValueError):
        DeterministicCase("x", 2.0, 30.0, "II", (frozenset(),))


def test_fig1_scenario_geometry():
    sc = fig1_scenario(CASES["2"])
    np.testing.assert_allclose(sc.channels.H, np.eye(2))
    np.testing.assert_allclose(sc.channels.g, [math.sin(math.pi / 3), math.cos(math.pi / 3)])
    assert sc.channels.noise_power == pytest.approx(1e-4)
    assert sc.budget.p_sdma == pytest.approx(1.0)
    assert sc.budget.p0 == pytest.approx(1.0)
    perturbed = fig1_scenario(CASES["2"], perturbation=1e-3, seed=1)
    assert 0 < np.max(np.abs(perturbed.channels.H - np.eye(2))) < 1e-2


def test_case0_outcome():
    out = run_case(CASES["0"])
    assert out.matches
    assert out.winner == "II" and out.winning_sic.sorted() == ()
    js = out.to_json()
    assert js["case"] == "0" and js["matches_table"]
