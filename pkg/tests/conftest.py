import numpy as np
import pytest

from rydnept.config import load_preset
from rydnept.params import LadderParams
from rydnept.physics import population_map


def two_level_rho_ee(delta, omega, gamma):
    """Closed-form steady excited population of a driven two-level atom."""
    return (omega ** 2 / 4) / (delta ** 2 + gamma ** 2 / 4 + omega ** 2 / 2)


def two_level_rho_eg(delta, omega, gamma):
    """Closed-form steady coherence rho_eg (with the matching population difference)."""
    ee = two_level_rho_ee(delta, omega, gamma)
    return (1j * omega / 2) * (1 - 2 * ee) / (gamma / 2 - 1j * delta)


def dense_scan_roots(params, step=1e-4):
    """Left ends of the grid cells where rho_r1r1(w) - w changes sign."""
    ws = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    g = population_map(params, ws) - ws
    s = np.sign(g)
    return ws[:-1][(s[:-1] != s[1:]) | (s[:-1] == 0)]


def random_params(rng):
    return LadderParams(
        omega_p=rng.uniform(2, 20), omega_c=rng.uniform(5, 30), omega_mw=rng.uniform(0, 20),
        delta_c=rng.uniform(-150, 0), gamma_e=5.2, gamma_r1=rng.uniform(0.5, 3),
        gamma_r2=rng.uniform(0.5, 3), gamma_d=rng.uniform(0.5, 6), V=rng.uniform(-900, 0))


def logistic(x, x0, w):
    return 1.0 / (1.0 + np.exp(-(x - x0) / w))


@pytest.fixture(scope="session")
def bistable_demo():
    return load_preset("bistable-demo")


@pytest.fixture(scope="session")
def cavity_demo():
    return load_preset("bistable-demo-cavity")


@pytest.fixture(scope="session")
def sensing_demo():
    return load_preset("sensing-demo")
