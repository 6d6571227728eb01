"""Brute-force maximizers used to cross-check the SDR path.

``grid_oracle_2d`` searches ``w = (r1, r2 e^{j phi})`` exhaustively for two
antennas (the global phase is fixed by taking the first entry real and
nonnegative). ``sampling_oracle`` is only a lower bound: it tries random
directions scaled onto the boundary of the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, PowerBudget, SicSet
from .precoding import Precoder
from .rates import QOS_RTOL, RateContext, replay_feasible, secondary_rate

DEFAULT_RESOLUTION = (200, 200, 180)


@dataclass(frozen=True)
class OracleReport:
    best_beam: np.ndarray
    best_rate: float
    resolution: str
    evaluations: int
    lipschitz_step: float = float("nan")

    def to_json(self) -> dict:
        from .model import complex_list

        return {"best_rate_bpcu": self.best_rate, "best_beam": complex_list(self.best_beam),
                "resolution": self.resolution, "evaluations": self.evaluations}


def _ratio_terms(sic_set: SicSet, channels: ChannelSet, context: RateContext):
    """(vector, interference-plus-noise) pairs whose SINRs enter the min."""
    terms = [(channels.g, context.a0)]
    terms += [(channels.h(i), context.a[i - 1]) for i in sic_set]
    return terms


def grid_search_2d(sic_sets, channels: ChannelSet, context: RateContext, budget: PowerBudget,
                   resolution=DEFAULT_RESOLUTION, block: int = 10) -> dict:
    """Run the exhaustive 2-antenna search for several SIC sets at once,
    sharing the per-point channel gains. Returns ``{sic_set: OracleReport}``."""
    if channels.n_antennas != 2:
        raise ValueError("grid oracle requires N = 2")
    n1, n2, n3 = resolution
    k = channels.n_users
    p0 = budget.p0
    sic_sets = list(sic_sets)
    desc = f"{n1}x{n2}x{n3}"
    zero = np.zeros(2, dtype=complex)
    if p0 <= 0.0:
        return {S: OracleReport(zero, 0.0, desc, 1, 0.0) for S in sic_sets}
    r1 = np.linspace(0.0, np.sqrt(p0), n1)
    r2 = np.linspace(0.0, np.sqrt(p0), n2)
    phase = np.exp(1j * 2.0 * np.pi * np.arange(n3) / n3)
    # second antenna entry for every (r2, phi) pair
    w2 = (r2[:, None] * phase[None, :]).ravel()

    vectors = {"g": channels.g}
    for j in range(1, k + 1):
        vectors[j] = channels.h(j)
    caps = context.tau + QOS_RTOL * np.maximum(context.tau, channels.noise_power)
    best = {S: (-1.0, None) for S in sic_sets}
    evaluations = 0
    for start in range(0, n1, block):
        a = r1[start:start + block][:, None]
        power = a ** 2 + np.abs(w2[None, :]) ** 2
        feasible_power = power <= p0 * (1.0 + 1e-12)
        gains = {key: np.abs(np.conj(v[0]) * a + np.conj(v[1]) * w2[None, :]) ** 2 for key, v in vectors.items()}
        evaluations += power.size
        for S in sic_sets:
            ok = feasible_power.copy()
            for j in S.complement(k):
                ok &= gains[j] <= caps[j - 1]
            sinr = gains["g"] / context.a0
            for i in S:
                sinr = np.minimum(sinr, gains[i] / context.a[i - 1])
            sinr = np.where(ok, sinr, -1.0)
            idx = int(np.argmax(sinr))
            val = float(sinr.flat[idx])
            if val > best[S][0]:
                row, col = divmod(idx, w2.size)
                best[S] = (val, np.array([a[row, 0], w2[col]], dtype=complex))

    step = np.sqrt(p0) * max(np.sqrt(2.0) / max(n1 - 1, 1), 2.0 * np.pi / n3)
    out = {}
    for S in sic_sets:
        val, w = best[S]
        if w is None:
            out[S] = OracleReport(zero, 0.0, desc, evaluations, 0.0)
            continue
        assert replay_feasible(w, S, channels, context, p0)
        rate = float(secondary_rate(w, S, channels, context))
        lip = max(2.0 * np.linalg.norm(v) * np.sqrt(p0) / (aq * np.log(2.0)) for v, aq in _ratio_terms(S, channels, context))
        out[S] = OracleReport(w, rate, desc, evaluations, lip * step)
    return out


def grid_oracle_2d(sic_set: SicSet, channels: ChannelSet, precoder: Precoder, context: RateContext,
                   budget: PowerBudget, resolution=DEFAULT_RESOLUTION) -> OracleReport:
    """Best feasible grid point for one SIC configuration (empty set: no SIC,
    every primary keeps its interference cap)."""
    return grid_search_2d([sic_set], channels, context, budget, resolution)[sic_set]


def sampling_oracle(sic_set: SicSet, channels: ChannelSet, precoder: Precoder, context: RateContext,
                    budget: PowerBudget, samples: int = 10_000, seed: int = 0, chunk: int = 20_000) -> OracleReport:
    rng = np.random.default_rng(seed)
    n, k = channels.n_antennas, channels.n_users
    capped = [j for j in sic_set.complement(k)]
    best_rate, best_w = 0.0, np.zeros(n, dtype=complex)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        d = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2.0)
        factor = budget.p0 / np.sum(np.abs(d) ** 2, axis=1)
        for j in capped:
            leak = np.abs(d @ np.conj(channels.h(j))) ** 2
            factor = np.minimum(factor, context.tau[j - 1] / leak)
        w = np.sqrt(factor)[:, None] * d
        rates = secondary_rate(w, sic_set, channels, context)
        i = int(np.argmax(rates))
        if rates[i] > best_rate:
            best_rate, best_w = float(rates[i]), w[i]
        done += m
    if best_rate > 0.0:
        assert replay_feasible(best_w, sic_set, channels, context, budget.p0)
    return OracleReport(best_w, best_rate, f"{samples} samples", samples)
