"""Beamforming toolkit for serving a NOMA secondary user on top of a ZF SDMA system."""

from .model import (
    BeamSolution,
    ChannelSet,
    PowerBudget,
    QosSpec,
    Scenario,
    ScenarioError,
    SicSet,
    dbm_to_watts,
    watts_to_dbm,
)
from .precoding import Precoder, SingularChannelError, zf_precoder
from .rates import RateContext, build_context
from .strategy_one import best_rider
from .strategy_two import best_new_beam

__version__ = "0.1.0"

__all__ = [
    "BeamSolution",
    "ChannelSet",
    "PowerBudget",
    "Precoder",
    "QosSpec",
    "RateContext",
    "Scenario",
    "ScenarioError",
    "SicSet",
    "SingularChannelError",
    "best_new_beam",
    "best_rider",
    "build_context",
    "dbm_to_watts",
    "watts_to_dbm",
    "zf_precoder",
]
