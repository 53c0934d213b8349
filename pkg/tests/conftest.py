import numpy as np
import pytest

from crossdiff import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure the math only."""
    w = np.full((4, 2), -0.1)
    u = np.full((4, 2), 1.1)
    pi = np.ones(2)
    a = np.full((2, 2), 0.5)
    a0 = np.ones(2)
    mu = np.ones(2)
    kernels.invert_field(w, 0.5, pi, 1e-2)
    kernels.mobility_fluxes(u, w, a0, a, mu, 0.5, pi, 1e-2, 1e-2 ** 0.25, 0.25)
    kernels.mobility_fluxes(u, w, a0, a, mu, 1.0, pi, 0.0, 0.0, 0.25)
    kernels.ha_quadform(u, w, a0, a, pi, 1.0)
