import numpy as np
import pytest

from noma_beamkit import PowerBudget, SicSet, dbm_to_watts
from noma_beamkit.oracle import grid_oracle_2d, grid_search_2d, sampling_oracle
from noma_beamkit.rates import replay_feasible, secondary_rate
from noma_beamkit.strategy_two import enumerate_subsets, solve_subset

from helpers import ortho2, random_setup

SMALL = (61, 61, 60)


def test_ortho2_full_sic_grid():
    ch, P, ctx, budget = ortho2()
    rep = grid_oracle_2d(SicSet.full(2), ch, P, ctx, budget)
    # analytic optimum: w = [1, 1]/sqrt 2, rate log2(1 + 0.5/0.5001)
    assert rep.best_rate == pytest.approx(np.log2(1 + 0.5 / 0.5001), abs=0.01)
    assert rep.best_rate <= np.log2(1 + 0.5 / 0.5001) + 1e-12
    assert rep.resolution == "200x200x180"
    assert rep.evaluations == 200 * 200 * 180
    assert replay_feasible(rep.best_beam, SicSet.full(2), ch, ctx, budget.p0)


def test_case0_direction():
    ch, P, ctx, budget = ortho2(p0=dbm_to_watts(27))
    rep = grid_oracle_2d(SicSet(), ch, P, ctx, budget)
    w = rep.best_beam
    cosang = abs(np.vdot(w, np.ones(2) / np.sqrt(2))) / np.linalg.norm(w)
    assert np.arccos(min(cosang, 1.0)) <= 0.02
    assert rep.best_rate == pytest.approx(np.log2(1 + budget.p0 / 0.5001), abs=0.01)


def test_zero_budget():
    ch, P, ctx, _ = ortho2()
    for S in enumerate_subsets(2, "full"):
        rep = grid_oracle_2d(S, ch, P, ctx, PowerBudget(1.0, 0.0))
        assert rep.best_rate == 0.0
        np.testing.assert_array_equal(rep.best_beam, 0.0)


def test_shared_search_matches_single_subset_calls():
    rng = np.random.default_rng(3)
    ch, P, ctx, budget = random_setup(rng)
    subsets = enumerate_subsets(2, "full")
    joint = grid_search_2d(subsets, ch, ctx, budget, SMALL)
    for S in subsets:
        single = grid_oracle_2d(S, ch, P, ctx, budget, SMALL)
        assert joint[S].best_rate == single.best_rate
        np.testing.assert_array_equal(joint[S].best_beam, single.best_beam)


@pytest.mark.parametrize("seed", range(4))
def test_nested_refinement_is_monotone_and_within_step_bound(seed):
    rng = np.random.default_rng(seed)
    ch, P, ctx, budget = random_setup(rng, noise=0.05)
    n, n3 = 31, 30
    coarse = grid_search_2d(enumerate_subsets(2, "full"), ch, ctx, budget, (n, n, n3))
    fine = grid_search_2d(enumerate_subsets(2, "full"), ch, ctx, budget, (2 * n - 1, 2 * n - 1, 2 * n3))
    for S, rep in coarse.items():
        # the coarse grid is a subset of the fine one
        assert fine[S].best_rate >= rep.best_rate - 1e-12
        assert fine[S].best_rate - rep.best_rate <= rep.lipschitz_step


@pytest.mark.parametrize("seed", range(5))
def test_grid_against_strategy_two(seed):
    rng = np.random.default_rng(50 + seed)
    ch, P, ctx, budget = random_setup(rng, noise=10 ** rng.uniform(-2, -1))
    reps = grid_search_2d(enumerate_subsets(2, "full"), ch, ctx, budget, (101, 101, 90))
    for S, rep in reps.items():
        out = solve_subset(S, ch, P, ctx, budget)
        # the relaxation bounds every feasible point, grid points included
        assert rep.best_rate <= out.sdr_value + 1e-7
        assert abs(out.achieved_rate - rep.best_rate) <= 0.02 + rep.lipschitz_step


def test_sampling_oracle_deterministic_and_feasible():
    rng = np.random.default_rng(9)
    ch, P, ctx, budget = random_setup(rng, n=3, k=2)
    S = SicSet.of(1)
    a = sampling_oracle(S, ch, P, ctx, budget, samples=1, seed=4)
    b = sampling_oracle(S, ch, P, ctx, budget, samples=1, seed=4)
    assert a.best_rate == b.best_rate
    np.testing.assert_array_equal(a.best_beam, b.best_beam)
    big = sampling_oracle(S, ch, P, ctx, budget, samples=5000, seed=4)
    assert replay_feasible(big.best_beam, S, ch, ctx, budget.p0)
    assert big.best_rate == pytest.approx(float(secondary_rate(big.best_beam, S, ch, ctx)))
    assert big.evaluations == 5000


def test_sampling_oracle_four_antennas():
    rng = np.random.default_rng(77)
    close = total = 0
    for _ in range(8):
        ch, P, ctx, budget = random_setup(rng, n=4, k=2, noise=10 ** rng.uniform(-2, -1))
        for S in enumerate_subsets(2, "full"):
            out = solve_subset(S, ch, P, ctx, budget)
            rep = sampling_oracle(S, ch, P, ctx, budget, samples=100_000, seed=1)
            assert rep.best_rate <= out.achieved_rate + 0.02
            total += 1
            close += out.achieved_rate - rep.best_rate <= 0.1
    assert close >= 0.9 * total
