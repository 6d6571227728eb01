"""Zero-forcing precoder of the legacy SDMA system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .model import ChannelSet

#: Largest accepted condition number of the Gram matrix H^H H.
MAX_GRAM_CONDITION = 1e12


class SingularChannelError(ValueError):
    """Primary channel matrix is rank deficient or too ill conditioned for ZF."""


@dataclass(frozen=True)
class Precoder:
    """ZF beams ``P = c H (H^H H)^{-1}``; column k is the beam of U_{k+1}."""

    columns: np.ndarray
    c: float
    beam_power: np.ndarray
    effective_gain: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.columns

    @property
    def n_users(self) -> int:
        return self.columns.shape[1]

    def p(self, k: int) -> np.ndarray:
        """Beam of primary user ``k`` (1-based)."""
        return self.columns[:, k - 1]


def zf_precoder(channels: ChannelSet, p_sdma: float) -> Precoder:
    """Build the ZF precoder with total power ``p_sdma`` watts.

    The pseudo-inverse is formed from a thin QR factorization,
    ``H (H^H H)^{-1} = Q R^{-H}``, so the Gram matrix is never inverted.
    """
    H = channels.H
    n, k = H.shape
    if k == 0:
        empty = np.zeros((n, 0), dtype=complex)
        return Precoder(empty, 0.0, np.zeros(0), np.zeros(0))
    Q, R = np.linalg.qr(H, mode="reduced")
    s = np.linalg.svd(R, compute_uv=False)
    if s[-1] <= s[0] / np.sqrt(MAX_GRAM_CONDITION):
        raise SingularChannelError("primary channel matrix is singular or ill conditioned")
    # R^{-H} via a triangular solve of R^H X = I
    r_inv_h = solve_triangular(R.conj().T, np.eye(k), lower=True)
    unnormalized = Q @ r_inv_h
    trace = float(np.sum(np.abs(r_inv_h) ** 2))
    c = float(np.sqrt(p_sdma / trace))
    P = c * unnormalized
    P.setflags(write=False)
    beam_power = np.sum(np.abs(P) ** 2, axis=0)
    gain = np.abs(np.einsum("nk,nk->k", H.conj(), P)) ** 2
    beam_power.setflags(write=False)
    gain.setflags(write=False)
    return Precoder(P, c, beam_power, gain)
