import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_beamkit import ChannelSet, PowerBudget, QosSpec, SicSet, best_rider, build_context, zf_precoder
from noma_beamkit.rates import replay_feasible
from noma_beamkit.strategy_one import RiderMode, rider_candidates, solve_rider_no_sic, solve_rider_sic

from helpers import ortho2, random_setup


def test_ortho2_no_sic_rider():
    ch, P, ctx, budget = ortho2()
    cand = solve_rider_no_sic(1, ch, P, ctx, budget)
    assert cand.alpha == pytest.approx(0.9998, rel=1e-12)
    assert cand.rate_bpcu == pytest.approx(np.log2(1 + 0.9998 * 0.25 / 0.5001), rel=1e-12)
    assert cand.rate_bpcu == pytest.approx(0.5848, abs=1e-4)


def test_ortho2_sic_rider_uses_full_budget():
    ch, P, ctx, budget = ortho2()
    cand = solve_rider_sic(1, ch, P, ctx, budget)
    assert cand.alpha == pytest.approx(2.0)
    np.testing.assert_allclose(cand.beam, [1.0, 0.0], atol=1e-12)
    assert cand.rate_bpcu == pytest.approx(np.log2(1 + 0.5 / 0.5001), rel=1e-12)
    assert np.vdot(cand.beam, cand.beam).real == pytest.approx(budget.p0, rel=1e-12)


def test_ortho2_winner_and_tie_break():
    ch, P, ctx, budget = ortho2()
    sol = best_rider(ch, P, ctx, budget)
    assert sol.rider_index == 1 and sol.sic_set == SicSet.of(1)
    assert sol.details["mode"] == RiderMode.SIC_AT_OWNER.value
    assert sol.rate_bpcu == pytest.approx(0.99986, abs=1e-5)
    assert len(sol.details["candidates"]) == 4


def test_zero_headroom_gives_zero_rate_and_warning():
    ch = ChannelSet(np.eye(2), np.ones(2) / np.sqrt(2), 1.0)  # SDMA alone misses R = 1
    P = zf_precoder(ch, 1.0)
    ctx = build_context(ch, P, QosSpec.uniform(2))
    budget = PowerBudget(1.0, 1.0)
    cand = solve_rider_no_sic(1, ch, P, ctx, budget)
    assert cand.alpha == 0.0 and cand.rate_bpcu == 0.0
    assert any("legacy-infeasible" in w for w in best_rider(ch, P, ctx, budget).warnings)


def test_secondary_orthogonal_to_every_beam():
    ch = ChannelSet(np.array([[1.0], [0.0]]), [0.0, 1.0], 1e-3)
    P = zf_precoder(ch, 1.0)
    ctx = build_context(ch, P, QosSpec.uniform(1))
    sol = best_rider(ch, P, ctx, PowerBudget(1.0, 1.0))
    assert sol.rate_bpcu == 0.0 and sol.feasible


def test_vanishing_budget():
    ch, P, ctx, _ = ortho2()
    rates = [solve_rider_sic(1, ch, P, ctx, PowerBudget(1.0, p0)).rate_bpcu for p0 in (1e-3, 1e-6, 1e-9)]
    assert rates[0] > rates[1] > rates[2] and rates[2] < 1e-8


def test_single_user_tie_goes_to_no_sic():
    # K = 1, g parallel to h1: both modes give log2(1 + P0 / 1.1), NoSic wins the tie
    ch = ChannelSet(np.array([[1.0]]), [1.0], 0.1)
    P = zf_precoder(ch, 1.0)
    ctx = build_context(ch, P, QosSpec.uniform(1))
    sol = best_rider(ch, P, ctx, PowerBudget(1.0, 0.5))
    assert sol.details["mode"] == "NoSic"
    assert sol.rate_bpcu == pytest.approx(np.log2(1 + 0.5 / 1.1), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_candidates_replay_and_monotone_in_p0(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    ch, P, ctx, budget = random_setup(rng, n=k + int(rng.integers(0, 2)), k=k, noise=10 ** rng.uniform(-3, 0))
    for cand in rider_candidates(ch, P, ctx, budget):
        assert replay_feasible(cand.beam, cand.sic_set, ch, ctx, budget.p0)
    rates = [best_rider(ch, P, ctx, PowerBudget(1.0, p0)).rate_bpcu for p0 in np.geomspace(0.01, 10, 10)]
    assert np.all(np.diff(rates) >= -1e-12)
