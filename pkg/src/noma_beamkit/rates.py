"""Secondary-user rates under the three SIC regimes and primary QoS headroom.

Every function here accepts a single beam of shape ``(N,)`` or a batch of
beams of shape ``(..., N)``; results broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, QosSpec, SicSet
from .precoding import Precoder

QOS_RTOL = 1e-9


@dataclass(frozen=True)
class RateContext:
    """Interference levels seen by each receiver under the legacy beams and
    the interference cap ``tau`` each primary user tolerates."""

    interference_secondary: float
    interference_primary: np.ndarray
    tau: np.ndarray
    effective_gain: np.ndarray
    noise_power: float

    @property
    def a0(self) -> float:
        """Interference-plus-noise at the secondary user."""
        return self.interference_secondary + self.noise_power

    @property
    def a(self) -> np.ndarray:
        """Interference-plus-noise at each primary user."""
        return self.interference_primary + self.noise_power

    @property
    def n_users(self) -> int:
        return len(self.tau)


def build_context(channels: ChannelSet, precoder: Precoder, qos: QosSpec) -> RateContext:
    if len(qos) != channels.n_users:
        raise ValueError("one target rate per primary user is required")
    P = precoder.P
    sigma2 = channels.noise_power
    # |g^H P|^2 is the squared norm of the row vector g^H P
    interference_secondary = float(np.sum(np.abs(channels.g.conj() @ P) ** 2))
    interference_primary = np.sum(np.abs(channels.H.conj().T @ P) ** 2, axis=1)
    gain = np.asarray(precoder.effective_gain, dtype=float)
    targets = np.asarray(qos.targets, dtype=float)
    tau = np.maximum(0.0, gain / (2.0 ** targets - 1.0) - sigma2)
    for arr in (interference_primary, tau, gain):
        arr.setflags(write=False)
    return RateContext(interference_secondary, interference_primary, tau, gain, sigma2)


def _gain(w, v):
    return np.abs(np.asarray(w) @ np.conj(v)) ** 2


def rate_no_sic(w, channels: ChannelSet, context: RateContext):
    """Rate of the secondary user decoding its signal against the legacy beams."""
    return np.log2(1.0 + _gain(w, channels.g) / context.a0)


def _sic_term(w, k: int, channels: ChannelSet, context: RateContext):
    # U_k must decode s0 against its own legacy interference-plus-noise
    return np.log2(1.0 + _gain(w, channels.h(k)) / context.a[k - 1])


def rate_partial_sic(w, sic_set: SicSet, channels: ChannelSet, context: RateContext):
    """Secondary rate when the users in ``sic_set`` decode s0 first."""
    if len(sic_set) == 0:
        raise ValueError("partial-SIC rate needs a nonempty SIC set")
    sic_set.check(channels.n_users)
    r = rate_no_sic(w, channels, context)
    for k in sic_set:
        r = np.minimum(r, _sic_term(w, k, channels, context))
    return r


def rate_full_sic(w, channels: ChannelSet, context: RateContext):
    return rate_partial_sic(w, SicSet.full(channels.n_users), channels, context)


def secondary_rate(w, sic_set: SicSet, channels: ChannelSet, context: RateContext):
    """Dispatch on the SIC set: empty means nobody performs SIC."""
    if len(sic_set) == 0:
        return rate_no_sic(w, channels, context)
    return rate_partial_sic(w, sic_set, channels, context)


def leakage(w, channels: ChannelSet):
    """``|h_k^H w|^2`` for every primary user, shape ``(..., K)``."""
    return np.abs(np.asarray(w) @ channels.H.conj()) ** 2


def qos_satisfied(w, channels: ChannelSet, context: RateContext, qos: QosSpec | None = None):
    """Per-user check of the interference cap ``|h_k^H w|^2 <= tau_k``."""
    slack = QOS_RTOL * np.maximum(context.tau, channels.noise_power)
    return leakage(w, channels) <= context.tau + slack


def primary_rates(w, channels: ChannelSet, context: RateContext):
    """Rates of the primary users when they treat s0 as noise."""
    return np.log2(1.0 + context.effective_gain / (leakage(w, channels) + channels.noise_power))


def replay_feasible(w, sic_set: SicSet, channels: ChannelSet, context: RateContext, p0: float) -> bool:
    """Exact constraint replay for a single beam: power cap plus the QoS of
    every user outside ``sic_set``."""
    w = np.asarray(w)
    if float(np.vdot(w, w).real) > p0 * (1.0 + 1e-9):
        return False
    ok = qos_satisfied(w, channels, context)
    return all(ok[j - 1] for j in sic_set.complement(channels.n_users))
