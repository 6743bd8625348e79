import numpy as np
import pytest

from renormstat.models import build_model, chaotic_spec
from renormstat.renorm import EnvironmentData
from renormstat.spectra import diagonalize


def random_hermitian(rng, n, real=False):
    x = rng.standard_normal((n, n))
    if not real:
        x = x + 1j * rng.standard_normal((n, n))
    return (x + x.conj().T) / 2


def random_density(rng, n):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_chaotic():
    """1 + 1 + 6 spins, moderate x:n coupling, fully diagonalized."""
    hs = build_model(chaotic_spec(6, epsilon=0.4, system_field=2.0, interaction_terms=(("x", "n"),)))
    total = diagonalize(hs.h_total)
    env = EnvironmentData(diagonalize(hs.h_env), hs.space)
    sys_spec = diagonalize(hs.h_s)
    return hs, total, env, sys_spec


@pytest.fixture(scope="session")
def small_free():
    """Same model at epsilon = 0."""
    hs = build_model(chaotic_spec(6, epsilon=0.0, system_field=2.0, interaction_terms=(("x", "n"),)))
    return hs, diagonalize(hs.h_total), EnvironmentData(diagonalize(hs.h_env), hs.space), diagonalize(hs.h_s)
