import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_beamkit import ChannelSet, SingularChannelError, zf_precoder


def test_identity_channel():
    pre = zf_precoder(ChannelSet(np.eye(2), [1, 0], 1.0), 1.0)
    np.testing.assert_allclose(pre.P, np.eye(2) / np.sqrt(2), atol=1e-15)
    assert pre.c == pytest.approx(1 / np.sqrt(2))
    np.testing.assert_allclose(pre.beam_power, [0.5, 0.5])


def test_duplicated_column_is_singular():
    h = np.array([1.0, 2.0j, 0.5])
    with pytest.raises(SingularChannelError):
        zf_precoder(ChannelSet(np.column_stack([h, h]), np.ones(3), 1.0), 1.0)


def test_matches_normal_equation_solve():
    # independent route: P = c H (H^H H)^{-1} through a dense solve
    rng = np.random.default_rng(11)
    H = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    pre = zf_precoder(ChannelSet(H, np.ones(4), 1.0), 1.0)
    G = H.conj().T @ H
    U = np.linalg.solve(G, np.eye(3))
    ref = H @ U
    c = np.sqrt(1.0 / np.trace(ref.conj().T @ ref).real)
    np.testing.assert_allclose(pre.P, c * ref, atol=1e-12)
    np.testing.assert_allclose(H.conj().T @ pre.P, pre.c * np.eye(3), atol=1e-12)
    assert np.sum(np.abs(pre.P) ** 2) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_scale_covariance(n, seed, beta):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    H = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    a = zf_precoder(ChannelSet(H, np.ones(n), 1.0), 2.0)
    b = zf_precoder(ChannelSet(beta * H, np.ones(n), 1.0), 2.0)
    np.testing.assert_allclose(a.P, b.P, atol=1e-9 * np.max(np.abs(a.P)))
    assert b.c == pytest.approx(beta * a.c, rel=1e-9)
    assert np.sum(b.beam_power) == pytest.approx(2.0, rel=1e-9)
    resid = np.max(np.abs(H.conj().T @ a.P - a.c * np.eye(k)))
    assert resid < 1e-9 * a.c
