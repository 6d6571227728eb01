"""Domain types, unit conversions and scenario files.

All quantities inside the package are linear: powers in watts, channel
entries as linear complex amplitudes, rates in bits per channel use.
dBm only appears at the file / command-line boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario violates one of its invariants."""


def dbm_to_watts(x):
    """Convert dBm to watts, ``10 ** ((x - 30) / 10)``."""
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p):
    return 10.0 * np.log10(np.asarray(p, dtype=float)) + 30.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """Primary channels ``H`` (N x K, column k is h_k), secondary channel ``g``
    and the receiver noise power in watts."""

    primary_channels: np.ndarray
    secondary_channel: np.ndarray
    noise_power: float

    def __post_init__(self):
        H = np.asarray(self.primary_channels, dtype=complex)
        if H.ndim == 1:
            H = H.reshape(-1, 1)
        g = np.asarray(self.secondary_channel, dtype=complex).reshape(-1)
        if H.ndim != 2:
            raise ScenarioError("primary channels must form an N x K matrix")
        if g.shape[0] != H.shape[0]:
            raise ScenarioError(
                f"dimension mismatch: secondary channel has {g.shape[0]} entries, "
                f"primary channels have {H.shape[0]} antennas"
            )
        if H.shape[0] < 1:
            raise ScenarioError("at least one antenna is required")
        if H.shape[1] > H.shape[0]:
            raise ScenarioError(f"K exceeds N ({H.shape[1]} users, {H.shape[0]} antennas)")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
            raise ScenarioError("nonfinite channel entry")
        noise = float(self.noise_power)
        if not np.isfinite(noise) or noise <= 0.0:
            raise ScenarioError("noise power must be positive")
        object.__setattr__(self, "primary_channels", _frozen(H))
        object.__setattr__(self, "secondary_channel", _frozen(g))
        object.__setattr__(self, "noise_power", noise)

    @property
    def H(self) -> np.ndarray:
        return self.primary_channels

    @property
    def g(self) -> np.ndarray:
        return self.secondary_channel

    @property
    def n_antennas(self) -> int:
        return self.primary_channels.shape[0]

    @property
    def n_users(self) -> int:
        return self.primary_channels.shape[1]

    def h(self, k: int) -> np.ndarray:
        """Channel of primary user ``k`` (1-based, as U_k)."""
        return self.primary_channels[:, k - 1]

    def digest(self) -> str:
        """Short content hash, used to identify channel draws in trial records."""
        import hashlib

        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.primary_channels).tobytes())
        m.update(np.ascontiguousarray(self.secondary_channel).tobytes())
        m.update(np.float64(self.noise_power).tobytes())
        return m.hexdigest()[:16]


@dataclass(frozen=True)
class PowerBudget:
    """Transmit powers in watts: ``p_sdma`` for the legacy beams, ``p0`` for
    the secondary user. ``p0 = 0`` is accepted as the degenerate no-service
    budget; :func:`validate` rejects it for complete scenarios."""

    p_sdma: float
    p0: float

    def __post_init__(self):
        p_sdma, p0 = float(self.p_sdma), float(self.p0)
        if not (np.isfinite(p_sdma) and p_sdma > 0.0):
            raise ScenarioError("nonpositive power: p_sdma must be positive")
        if not (np.isfinite(p0) and p0 >= 0.0):
            raise ScenarioError("nonpositive power: p0 must be nonnegative")
        object.__setattr__(self, "p_sdma", p_sdma)
        object.__setattr__(self, "p0", p0)


@dataclass(frozen=True)
class QosSpec:
    """Target rates of the primary users in BPCU."""

    targets: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in np.atleast_1d(self.targets))
        if not all(np.isfinite(x) and x > 0.0 for x in t):
            raise ScenarioError("target rates must be positive")
        object.__setattr__(self, "targets", t)

    @classmethod
    def uniform(cls, k: int, rate: float = 1.0) -> "QosSpec":
        return cls((rate,) * k)

    def __len__(self):
        return len(self.targets)


@dataclass(frozen=True)
class SicSet:
    """Primary users (1-based labels) that decode the secondary signal first."""

    members: frozenset = frozenset()

    def __post_init__(self):
        m = frozenset(int(i) for i in self.members)
        if any(i < 1 for i in m):
            raise ScenarioError("SIC members are 1-based user labels")
        object.__setattr__(self, "members", m)

    @classmethod
    def of(cls, *users: int) -> "SicSet":
        return cls(frozenset(users))

    @classmethod
    def full(cls, k: int) -> "SicSet":
        return cls(frozenset(range(1, k + 1)))

    def complement(self, k: int) -> tuple:
        return tuple(j for j in range(1, k + 1) if j not in self.members)

    def sorted(self) -> tuple:
        return tuple(sorted(self.members))

    def sort_key(self) -> tuple:
        """Tie-break order: smaller sets first, then lexicographic."""
        return (len(self.members), self.sorted())

    def check(self, k: int) -> None:
        if any(i > k for i in self.members):
            raise ScenarioError(f"SIC set {self.sorted()} not a subset of 1..{k}")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.sorted())

    def __repr__(self):
        return f"SicSet({set(self.sorted()) or '{}'})"


class Strategy(str, Enum):
    RIDE_EXISTING = "StrategyI"
    NEW_BEAM = "StrategyII"


@dataclass(frozen=True)
class BeamSolution:
    """Secondary-user beam together with the decoding configuration it was
    optimized for."""

    beam: np.ndarray
    sic_set: SicSet
    rate_bpcu: float
    strategy: Strategy
    rider_index: Optional[int] = None
    feasible: bool = True
    warnings: tuple = ()
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "beam", _frozen(np.asarray(self.beam, dtype=complex)))
        rate = float(self.rate_bpcu) if self.feasible else 0.0
        if rate < 0.0:
            raise ScenarioError("rate must be nonnegative")
        object.__setattr__(self, "rate_bpcu", rate)

    @property
    def power_w(self) -> float:
        return float(np.vdot(self.beam, self.beam).real)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "sic_users": list(self.sic_set.sorted()),
            "rider_index": self.rider_index,
            "rate_bpcu": self.rate_bpcu,
            "beam": complex_list(self.beam),
            "beam_power_w": self.power_w,
            "feasible": self.feasible,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Scenario:
    channels: ChannelSet
    budget: PowerBudget
    qos: QosSpec

    def __post_init__(self):
        validate(self.channels, self.budget, self.qos)


def validate(channels: ChannelSet, budget: PowerBudget, qos: QosSpec) -> None:
    """Check a complete scenario; raises :class:`ScenarioError` naming the
    violated invariant."""
    if not isinstance(channels, ChannelSet):
        raise ScenarioError("channels must be a ChannelSet")
    if channels.n_users > channels.n_antennas:
        raise ScenarioError("K exceeds N")
    if channels.noise_power <= 0:
        raise ScenarioError("noise power must be positive")
    if budget.p_sdma <= 0 or budget.p0 <= 0:
        raise ScenarioError("nonpositive power")
    if len(qos) != channels.n_users:
        raise ScenarioError(
            f"dimension mismatch: {len(qos)} target rates for {channels.n_users} users"
        )


# -- JSON boundary ---------------------------------------------------------


def complex_list(v: Iterable[complex]) -> list:
    return [{"re": float(np.real(x)), "im": float(np.imag(x))} for x in np.ravel(v)]


def complex_grid(a: np.ndarray) -> list:
    return [complex_list(row) for row in np.atleast_2d(a)]


def parse_complex(item) -> complex:
    try:
        return complex(float(item["re"]), float(item["im"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"complex entries must be {{re, im}} pairs, got {item!r}") from exc


def scenario_from_dict(d: dict) -> Scenario:
    try:
        n, k = int(d["n"]), int(d["k"])
        h_users = d["h"]
        g = np.array([parse_complex(x) for x in d["g"]])
        sigma2 = dbm_to_watts(float(d["sigma2_dbm"]))
        p_sdma = dbm_to_watts(float(d["p_sdma_dbm"]))
        p0 = dbm_to_watts(float(d["p0_dbm"]))
        rates = [float(r) for r in d["rates_bpcu"]]
    except KeyError as exc:
        raise ScenarioError(f"scenario file missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from exc
    if len(h_users) != k:
        raise ScenarioError(f"dimension mismatch: k={k} but {len(h_users)} channel vectors")
    cols = []
    for user in h_users:
        col = [parse_complex(x) for x in user]
        if len(col) != n:
            raise ScenarioError(f"dimension mismatch: channel vector of length {len(col)}, n={n}")
        cols.append(col)
    if g.shape[0] != n:
        raise ScenarioError(f"dimension mismatch: g has {g.shape[0]} entries, n={n}")
    H = np.array(cols, dtype=complex).T.reshape(n, k)
    return Scenario(ChannelSet(H, g, sigma2), PowerBudget(p_sdma, p0), QosSpec(tuple(rates)))


def scenario_to_dict(s: Scenario) -> dict:
    ch = s.channels
    return {
        "n": ch.n_antennas,
        "k": ch.n_users,
        "h": [complex_list(ch.H[:, k]) for k in range(ch.n_users)],
        "g": complex_list(ch.g),
        "sigma2_dbm": watts_to_dbm(ch.noise_power),
        "p_sdma_dbm": watts_to_dbm(s.budget.p_sdma),
        "p0_dbm": watts_to_dbm(s.budget.p0),
        "rates_bpcu": list(s.qos.targets),
    }


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from exc
    return scenario_from_dict(d)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2))
