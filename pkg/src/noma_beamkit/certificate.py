"""Dual-side diagnostics for SDR solutions.

Stationarity gives ``Lam = lam_cap I - M`` with ``M`` built from the
objective and the constraint multipliers. Since ``Lam W = 0`` and ``Lam`` is
PSD, the two largest eigenvalues of ``M`` relative to ``lam_cap`` decide
whether ``W`` must be rank one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .model import ChannelSet
from .sdp import SdpInstance, SdpResult, dual_matrix_M, face_view

RANK_TOL = 1e-6
EIG_RTOL = 1e-6
ORTHO_TOL = 1e-9
REAL_TOL = 1e-12


class Classification(str, Enum):
    PROVABLY_RANK_ONE = "ProvablyRankOne"
    DEGENERATE_ORTHOGONAL = "DegenerateOrthogonal"
    DEGENERATE_REAL = "DegenerateRealChannels"
    REPEATED_EIGENVALUE = "RepeatedEigenvalue"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class DegeneracyFlags:
    orthogonal_pair: bool
    real_valued: bool

    def to_json(self) -> dict:
        return {"orthogonal_pair": self.orthogonal_pair, "real_valued": self.real_valued}


@dataclass(frozen=True)
class Certificate:
    rank_estimate: int
    dual_matrix_eigs: tuple
    cap_dual: float
    classification: Classification
    eigen_gap: float
    stationarity_residual: float
    flags: DegeneracyFlags
    note: str = ""

    def to_json(self) -> dict:
        return {
            "rank_estimate": self.rank_estimate,
            "dual_matrix_eigs": [float(e) for e in self.dual_matrix_eigs],
            "cap_dual": float(self.cap_dual),
            "classification": self.classification.value,
            "eigen_gap": float(self.eigen_gap),
            "stationarity_residual": float(self.stationarity_residual),
            "degeneracy": self.flags.to_json(),
            "note": self.note,
        }


def numerical_rank(W: np.ndarray, tol: float = RANK_TOL) -> int:
    eigs = np.linalg.eigvalsh(W)[::-1]
    if eigs[0] <= 0.0:
        return 0
    return int(np.sum(eigs > tol * eigs[0]))


def _orthogonal_pair(vectors) -> bool:
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            u, v = vectors[i], vectors[j]
            denom = np.linalg.norm(u) * np.linalg.norm(v)
            if denom > 0 and abs(np.vdot(u, v)) / denom < ORTHO_TOL:
                return True
    return False


def _real_valued(arrays) -> bool:
    re = max((np.max(np.abs(np.real(a)), initial=0.0) for a in arrays), default=0.0)
    im = max((np.max(np.abs(np.imag(a)), initial=0.0) for a in arrays), default=0.0)
    return bool(im < REAL_TOL * re) if re > 0 else True


def detect_degeneracy(channels: ChannelSet) -> DegeneracyFlags:
    """Flag the two input structures under which rank one is not guaranteed:
    a pair of orthogonal primary channels, or purely real channel data."""
    cols = [channels.H[:, k] for k in range(channels.n_users)]
    return DegeneracyFlags(_orthogonal_pair(cols), _real_valued([channels.H, channels.g]))


def _flags_from_instance(instance: SdpInstance) -> DegeneracyFlags:
    # primary-user rows carry rank-one matrices h h^H; recover h up to phase
    vecs = []
    mats = []
    for con in instance.constraints:
        mats.append(con.matrix)
        if con.label == "secondary":
            continue
        w, V = np.linalg.eigh(con.matrix)
        vecs.append(np.sqrt(max(w[-1], 0.0)) * V[:, -1])
    if instance.objective_matrix is not None:
        mats.append(instance.objective_matrix)
    return DegeneracyFlags(_orthogonal_pair(vecs), _real_valued(mats))


def certify(
    instance: SdpInstance, result: SdpResult, channels: Optional[ChannelSet] = None
) -> Certificate:
    """Classify a solved relaxation. Diagnostic only; extraction never
    depends on it."""
    flags = detect_degeneracy(channels) if channels is not None else _flags_from_instance(instance)
    # a result solved on a face is certified in the face's coordinates
    instance, result = face_view(instance, result)
    M = dual_matrix_M(instance, result.duals)
    eigs = np.sort(np.linalg.eigvalsh(M))[::-1]
    cap = float(result.cap_dual)
    l1 = float(eigs[0])
    l2 = float(eigs[1]) if len(eigs) > 1 else -np.inf
    eigen_gap = l1 - l2 if np.isfinite(l2) else np.inf
    stat = np.linalg.norm(cap * np.eye(instance.dim) - M - result.dual_matrix)
    rank = numerical_rank(result.W)
    scale = max(abs(l1), abs(cap), 1e-300)
    tol = EIG_RTOL * scale

    note = ""
    if rank == 0:
        cls, note = Classification.INCONCLUSIVE, "W = 0"
    elif eigen_gap < EIG_RTOL * max(abs(l1), 1e-300):
        if flags.orthogonal_pair:
            cls = Classification.DEGENERATE_ORTHOGONAL
        elif flags.real_valued:
            cls = Classification.DEGENERATE_REAL
        else:
            cls = Classification.REPEATED_EIGENVALUE
    elif l1 < cap - tol:
        cls, note = Classification.INCONCLUSIVE, "largest eigenvalue below cap dual (Lam full rank)"
    elif abs(l1 - cap) <= tol and l2 < cap - tol:
        cls = Classification.PROVABLY_RANK_ONE
    else:
        cls, note = Classification.INCONCLUSIVE, "second eigenvalue reaches cap dual (Lam indefinite)"
    return Certificate(rank, tuple(eigs), cap, cls, float(max(eigen_gap, 0.0)), float(stat), flags, note)
