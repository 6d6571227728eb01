"""Riding on an existing beam: ``w = sqrt(alpha) p_i`` in closed form."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import BeamSolution, ChannelSet, PowerBudget, SicSet, Strategy
from .precoding import Precoder
from .rates import RateContext, rate_no_sic, rate_partial_sic

#: Rates closer than this are treated as ties.
TIE_TOL = 1e-9


class RiderMode(str, Enum):
    NO_SIC = "NoSic"
    SIC_AT_OWNER = "SicAtOwner"


@dataclass(frozen=True)
class RiderCandidate:
    beam_index: int
    mode: RiderMode
    alpha: float
    rate_bpcu: float
    beam: np.ndarray

    @property
    def sic_set(self) -> SicSet:
        if self.mode is RiderMode.NO_SIC:
            return SicSet()
        return SicSet.of(self.beam_index)

    def to_json(self) -> dict:
        return {
            "beam_index": self.beam_index,
            "mode": self.mode.value,
            "alpha": self.alpha,
            "rate_bpcu": self.rate_bpcu,
        }


def max_alpha(i: int, precoder: Precoder, budget: PowerBudget) -> float:
    return budget.p0 / float(precoder.beam_power[i - 1])


def solve_rider_no_sic(
    i: int, channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget
) -> RiderCandidate:
    """U_i keeps decoding its own signal directly; alpha is clipped by the
    power budget and by U_i's interference cap."""
    qos_alpha = context.tau[i - 1] / float(precoder.effective_gain[i - 1])
    alpha = float(min(max_alpha(i, precoder, budget), qos_alpha))
    w = np.sqrt(alpha) * precoder.p(i)
    return RiderCandidate(i, RiderMode.NO_SIC, alpha, float(rate_no_sic(w, channels, context)), w)


def solve_rider_sic(
    i: int, channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget
) -> RiderCandidate:
    """U_i removes s0 before decoding, so the whole budget goes on its beam.
    Other primaries see nothing of s0 because of ZF."""
    alpha = max_alpha(i, precoder, budget)
    w = np.sqrt(alpha) * precoder.p(i)
    rate = float(rate_partial_sic(w, SicSet.of(i), channels, context))
    return RiderCandidate(i, RiderMode.SIC_AT_OWNER, alpha, rate, w)


def rider_candidates(channels, precoder, context, budget) -> list:
    """All 2K candidates in tie-break order: NoSic before SIC, low index first."""
    k = channels.n_users
    out = [solve_rider_no_sic(i, channels, precoder, context, budget) for i in range(1, k + 1)]
    out += [solve_rider_sic(i, channels, precoder, context, budget) for i in range(1, k + 1)]
    return out


def best_rider(
    channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget
) -> BeamSolution:
    candidates = rider_candidates(channels, precoder, context, budget)
    warnings = []
    if np.any(context.tau <= 0.0):
        warnings.append("legacy-infeasible: SDMA alone misses the QoS target of some primary user")
    if not candidates:
        return BeamSolution(
            np.zeros(channels.n_antennas, dtype=complex), SicSet(), 0.0,
            Strategy.RIDE_EXISTING, warnings=tuple(warnings),
        )
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.rate_bpcu > best.rate_bpcu + TIE_TOL:
            best = cand
    return BeamSolution(
        best.beam,
        best.sic_set,
        best.rate_bpcu,
        Strategy.RIDE_EXISTING,
        rider_index=best.beam_index,
        warnings=tuple(warnings),
        details={"mode": best.mode.value, "alpha": best.alpha,
                 "candidates": [c.to_json() for c in candidates]},
    )
