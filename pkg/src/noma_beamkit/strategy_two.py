"""Forming a new beam through semidefinite relaxation.

For every SIC set the beam problem is lifted to ``W = w w^H``, the rank
constraint is dropped, and a beam is recovered from the relaxed optimum
(principal eigenvector when ``W`` is numerically rank one, Gaussian
randomization otherwise). Every reported rate is recomputed from the
recovered beam, never taken from the relaxation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import sdp
from .certificate import Certificate, certify, numerical_rank
from .model import BeamSolution, ChannelSet, PowerBudget, SicSet, Strategy
from .precoding import Precoder
from .rates import RateContext, replay_feasible, secondary_rate
from .sdp import Objective, SdpConstraint, SdpInstance, SdpResult, Sense

RANK_TOL = 1e-6
DEFAULT_SAMPLES = 1000
MAX_FULL_ENUMERATION_K = 10
TIE_TOL = 1e-9


class SicPolicy(str, Enum):
    FULL = "full"
    SIMPLIFIED = "simplified"


@dataclass(frozen=True)
class Extraction:
    kind: str  # "Eigenvector" or "Randomized"
    samples_used: int = 0

    def __str__(self):
        return self.kind if self.kind == "Eigenvector" else f"Randomized({self.samples_used})"


@dataclass
class SdrOutcome:
    sic_set: SicSet
    status: sdp.Status
    sdr_value: float = float("nan")
    W_rank: int = 0
    beam: Optional[np.ndarray] = None
    achieved_rate: float = 0.0
    extraction: Optional[Extraction] = None
    certificate: Optional[Certificate] = None
    instance: Optional[SdpInstance] = field(default=None, repr=False)
    result: Optional[SdpResult] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is sdp.Status.OPTIMAL

    def to_json(self) -> dict:
        return {
            "sic_users": list(self.sic_set.sorted()),
            "status": self.status.value,
            "sdr_value_bpcu": None if not self.ok else float(self.sdr_value),
            "rank": self.W_rank,
            "extraction": None if self.extraction is None else str(self.extraction),
            "achieved_rate_bpcu": float(self.achieved_rate),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
        }


def _outer(v):
    return np.outer(v, np.conj(v))


def _qos_row(j, channels, context):
    return SdpConstraint(_outer(channels.h(j)), 0.0, Sense.LE, float(context.tau[j - 1]), f"qos-{j}")


def _sic_row(i, channels, context):
    return SdpConstraint(_outer(channels.h(i)), float(context.a[i - 1]), Sense.GE, 0.0, f"sic-{i}")


def _secondary_row(channels, context):
    return SdpConstraint(_outer(channels.g), float(context.a0), Sense.GE, 0.0, "secondary")


def build_no_sic(channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget) -> SdpInstance:
    """Maximize ``tr(G W)`` under every primary interference cap."""
    rows = [_qos_row(k, channels, context) for k in range(1, channels.n_users + 1)]
    return SdpInstance(channels.n_antennas, Objective.MAXIMIZE_TRACE, tuple(rows), budget.p0, _outer(channels.g))


def build_partial_sic(
    sic_set: SicSet, channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget
) -> SdpInstance:
    """Max-min SINR epigraph with ``z = 2^t - 1``: the secondary user and
    every SIC user must see SINR ``>= z``; users outside the set keep their caps."""
    k = channels.n_users
    sic_set.check(k)
    if len(sic_set) == 0 or len(sic_set) == k:
        raise ValueError("partial SIC needs a proper nonempty subset; use build_no_sic / build_full_sic")
    rows = [_secondary_row(channels, context)]
    rows += [_sic_row(i, channels, context) for i in sic_set]
    rows += [_qos_row(j, channels, context) for j in sic_set.complement(k)]
    return SdpInstance(channels.n_antennas, Objective.MAXIMIZE_Z, tuple(rows), budget.p0)


def build_full_sic(channels: ChannelSet, precoder: Precoder, context: RateContext, budget: PowerBudget) -> SdpInstance:
    rows = [_secondary_row(channels, context)]
    rows += [_sic_row(i, channels, context) for i in range(1, channels.n_users + 1)]
    return SdpInstance(channels.n_antennas, Objective.MAXIMIZE_Z, tuple(rows), budget.p0)


def build_instance(sic_set, channels, precoder, context, budget) -> SdpInstance:
    k = channels.n_users
    if len(sic_set) == 0:
        return build_no_sic(channels, precoder, context, budget)
    if len(sic_set) == k:
        return build_full_sic(channels, precoder, context, budget)
    return build_partial_sic(sic_set, channels, precoder, context, budget)


def sdr_rate_bound(instance: SdpInstance, result: SdpResult, context: RateContext) -> float:
    """Relaxation optimum mapped to the rate domain."""
    if instance.objective is Objective.MAXIMIZE_TRACE:
        return float(np.log2(1.0 + max(result.objective_value, 0.0) / context.a0))
    return float(np.log2(1.0 + max(result.z, 0.0)))


# -- beam recovery --------------------------------------------------------------


def _cap_rows(instance):
    """Rows of the form ``tr(A W) <= c`` that do not involve z."""
    return [c for c in instance.constraints if c.sense is Sense.LE and c.z_coeff == 0.0]


def _null_projector(instance):
    """Projector onto the common null space of zero-capacity rows."""
    ranges = []
    for con in _cap_rows(instance):
        if con.rhs <= 0.0:
            w, V = np.linalg.eigh(con.matrix)
            keep = w > 1e-12 * max(w[-1], 1e-300)
            ranges.append(V[:, keep])
    if not ranges:
        return None
    R = np.hstack(ranges)
    U, s, _ = np.linalg.svd(R, full_matrices=False)
    Q = U[:, s > 1e-12 * s[0]]
    return np.eye(instance.dim) - Q @ Q.conj().T


def scale_to_feasible(w, instance: SdpInstance, grow: bool = False) -> np.ndarray:
    """Scale ``w`` to the largest multiple meeting the trace cap and every
    z-free ``<=`` row; rows with zero capacity are handled by projection.
    Without ``grow`` the beam is only ever shrunk."""
    w = np.asarray(w, dtype=complex)
    P = _null_projector(instance)
    if P is not None:
        w = P @ w
    power = float(np.vdot(w, w).real)
    if power <= 0.0:
        return np.zeros_like(w)
    factor = instance.trace_cap / power
    for con in _cap_rows(instance):
        q = float(np.real(np.vdot(w, con.matrix @ w)))
        if con.rhs > 0.0 and q > 0.0:
            factor = min(factor, con.rhs / q)
    return np.sqrt(factor) * w if (grow or factor < 1.0) else w


def _instance_score(instance: SdpInstance) -> Callable:
    def score(w):
        if instance.objective is Objective.MAXIMIZE_TRACE:
            return float(np.real(np.vdot(w, instance.objective_matrix @ w)))
        ratios = []
        for con in instance.constraints:
            if con.sense is Sense.GE and con.z_coeff > 0:
                ratios.append((np.real(np.vdot(w, con.matrix @ w)) - con.rhs) / con.z_coeff)
        return float(min(ratios)) if ratios else 0.0

    return score


def extract_beam(
    W: np.ndarray,
    instance: SdpInstance,
    samples: int = DEFAULT_SAMPLES,
    rng: Optional[np.random.Generator] = None,
    score: Optional[Callable] = None,
    rank_tol: float = RANK_TOL,
):
    """Recover a beam from a relaxed solution. Returns ``(w, Extraction)``.

    ``score`` ranks randomized candidates (defaults to the instance
    objective: ``|g^H w|^2`` or the achieved epigraph level z).
    """
    W = 0.5 * (W + np.conj(W).T)
    lam, U = np.linalg.eigh(W)
    lam, U = lam[::-1], U[:, ::-1]
    principal = np.sqrt(max(lam[0], 0.0)) * U[:, 0]
    if lam[0] <= 0.0 or len(lam) == 1 or lam[1] <= rank_tol * lam[0]:
        return scale_to_feasible(principal, instance), Extraction("Eigenvector")

    score = score or _instance_score(instance)
    rng = rng if rng is not None else np.random.default_rng(0)
    root = U * np.sqrt(np.maximum(lam, 0.0))
    n = W.shape[0]
    xi = (rng.standard_normal((samples, n)) + 1j * rng.standard_normal((samples, n))) / np.sqrt(2.0)
    cands = xi @ root.T
    best_w, best_val = None, 0.0
    for w in cands:
        w = scale_to_feasible(w, instance, grow=True)
        val = score(w)
        if val > best_val:
            best_w, best_val = w, val
    if best_w is None:
        return scale_to_feasible(principal, instance), Extraction("Eigenvector")
    return best_w, Extraction("Randomized", samples)


# -- SIC-set search ----------------------------------------------------------------


def enumerate_subsets(k: int, policy: SicPolicy, channels: Optional[ChannelSet] = None) -> list:
    """Candidate SIC sets in tie-break order (small sets first, then lexicographic)."""
    policy = SicPolicy(policy)
    if policy is SicPolicy.FULL:
        if k > MAX_FULL_ENUMERATION_K:
            raise ValueError(f"full enumeration is limited to K <= {MAX_FULL_ENUMERATION_K}; use the simplified policy")
        subsets = [SicSet(frozenset(c)) for r in range(k + 1) for c in itertools.combinations(range(1, k + 1), r)]
        return sorted(subsets, key=SicSet.sort_key)
    out = [SicSet()]
    if k > 0:
        norms = np.linalg.norm(channels.H, axis=0)
        out.append(SicSet.of(int(np.argmax(norms)) + 1))
    return out


def _subset_seed(seed: int, sic_set: SicSet) -> list:
    mask = sum(1 << (i - 1) for i in sic_set)
    return [int(seed), mask]


def solve_subset(
    sic_set: SicSet,
    channels: ChannelSet,
    precoder: Precoder,
    context: RateContext,
    budget: PowerBudget,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    options: Optional[sdp.SolverOptions] = None,
) -> SdrOutcome:
    instance = build_instance(sic_set, channels, precoder, context, budget)
    result = sdp.solve(instance, options)
    out = SdrOutcome(sic_set, result.status, instance=instance, result=result)
    if not result.ok:
        return out
    out.sdr_value = sdr_rate_bound(instance, result, context)
    out.W_rank = numerical_rank(result.W)
    rng = np.random.default_rng(_subset_seed(seed, sic_set))
    w, tag = extract_beam(
        result.W, instance, samples=samples, rng=rng,
        score=lambda v: float(secondary_rate(v, sic_set, channels, context)),
    )
    if not replay_feasible(w, sic_set, channels, context, budget.p0):
        # cannot happen after scale_to_feasible; keep the guarantee explicit
        w = np.zeros(channels.n_antennas, dtype=complex)
    out.beam = w
    out.extraction = tag
    out.achieved_rate = float(secondary_rate(w, sic_set, channels, context))
    out.certificate = certify(instance, result, channels)
    return out


def best_new_beam(
    channels: ChannelSet,
    precoder: Precoder,
    context: RateContext,
    budget: PowerBudget,
    sic_policy: SicPolicy | str = SicPolicy.FULL,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    options: Optional[sdp.SolverOptions] = None,
) -> BeamSolution:
    subsets = enumerate_subsets(channels.n_users, sic_policy, channels)
    outcomes = [solve_subset(S, channels, precoder, context, budget, samples, seed, options) for S in subsets]
    best = None
    for o in outcomes:
        if o.ok and (best is None or o.achieved_rate > best.achieved_rate + TIE_TOL):
            best = o
    warnings = [f"subset {list(o.sic_set.sorted())}: {o.status.value}" for o in outcomes if not o.ok]
    details = {"subsets": outcomes, "policy": SicPolicy(sic_policy).value}
    if best is None:
        return BeamSolution(np.zeros(channels.n_antennas, dtype=complex), SicSet(), 0.0, Strategy.NEW_BEAM,
                            feasible=False, warnings=tuple(warnings + ["all subsets failed"]), details=details)
    return BeamSolution(best.beam, best.sic_set, best.achieved_rate, Strategy.NEW_BEAM,
                        warnings=tuple(warnings), details=details)
