import numpy as np
import pytest

from omnisurface import ChannelSet, IosState, Mode


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, n_tx=3, m=4, k_r=2, k_t=1, direct=1.0):
    """Unit-scale Rayleigh channels, so noise powers of order one are meaningful."""
    return ChannelSet(cgauss(rng, m, n_tx), direct * cgauss(rng, k_r, n_tx),
                      cgauss(rng, k_r, m), cgauss(rng, k_t, m))


def random_state(rng, m, mode=Mode.UED):
    return IosState(np.exp(2j * np.pi * rng.random(m)), np.exp(2j * np.pi * rng.random(m)),
                    rng.random(m), mode)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
