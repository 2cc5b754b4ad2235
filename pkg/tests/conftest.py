import warnings

import numpy as np
import pytest

from nvsigma.ba import bloch_wave, self_dualize
from nvsigma.elliptic import InstantonData
from nvsigma.harmonic import instanton_map, potential
from nvsigma.torus import GridFunction, TorusShape

ACCEPTANCE_LINES: list = []


def trig_potential(shape):
    """Smooth three-mode test potential; its Bloch data is self-dual and fully resolved on 16^2."""
    return GridFunction.from_function(
        shape, lambda x, y: 0.5 * np.cos(2 * np.pi * x) + 0.3 * np.cos(2 * np.pi * (x + y))
        + 0.2 * np.sin(2 * np.pi * y))


@pytest.fixture(scope="session")
def trig16():
    shape = TorusShape(1j, 16, 16)
    u = trig_potential(shape)
    return u, self_dualize(bloch_wave(u, 8)).wave


@pytest.fixture(scope="session")
def ell2_data():
    return InstantonData(1.0, [0.0, 0.5 + 0.5j], [0.5, 0.5j])


@pytest.fixture(scope="session")
def ell2(ell2_data):
    """Degree-2 instanton on 128^2: (data, map, potential, self-dual wave)."""
    shape = TorusShape(1j, 128, 128)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = instanton_map(ell2_data, shape)
        u = potential(m)
        w = self_dualize(bloch_wave(u, 8)).wave
    return ell2_data, m, u, w


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
