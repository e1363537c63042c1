import numpy as np
import pytest

from fklab.discretize import Grid, assemble_generator
from fklab.model import KernelSpec, power_potential
from fklab.spectral import solve_spectrum

_CACHE = {}


def solve_case(family="truncated", alpha=1.0, theta=2.0, R=10.0, N=401, gamma=float("inf"), potential=None):
    """Cached (assembly, spectrum) for the configurations tests share."""
    key = (family, alpha, theta, R, N, gamma, potential)
    if key not in _CACHE:
        kernel = KernelSpec(family=family, alpha1=alpha, alpha2=alpha, gamma=gamma)
        pot = potential if potential is not None else power_potential(theta)
        grid = Grid(R=R, N=N)
        asm = assemble_generator(kernel, pot, grid)
        _CACHE[key] = (asm, solve_spectrum(asm))
    return _CACHE[key]


@pytest.fixture(scope="session")
def trunc_kernel():
    return KernelSpec(family="truncated", alpha1=1.0, alpha2=1.0)


@pytest.fixture(scope="session")
def trunc_kernel_half():
    return KernelSpec(family="truncated", alpha1=0.5, alpha2=0.5)


@pytest.fixture(scope="session")
def base_case():
    """truncated alpha=1 kernel, V = x^2, R=10, N=401."""
    return solve_case()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
