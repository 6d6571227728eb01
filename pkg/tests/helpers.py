import numpy as np

from noma_beamkit import ChannelSet, PowerBudget, QosSpec, build_context, zf_precoder


def ortho2(p0=1.0, noise=1e-4):
    """H = I2, g = [1, 1]/sqrt 2, unit SDMA power."""
    ch = ChannelSet(np.eye(2), np.ones(2) / np.sqrt(2.0), noise)
    budget = PowerBudget(1.0, p0)
    P = zf_precoder(ch, budget.p_sdma)
    return ch, P, build_context(ch, P, QosSpec.uniform(2)), budget


def random_setup(rng, n=2, k=2, p_sdma=1.0, p0=1.0, noise=1e-2, rates=1.0):
    H = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / np.sqrt(2)
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    ch = ChannelSet(H, g, noise)
    budget = PowerBudget(p_sdma, p0)
    P = zf_precoder(ch, p_sdma)
    return ch, P, build_context(ch, P, QosSpec.uniform(k, rates)), budget
