import math

import numpy as np
import pytest

from gkflow.flow import Background, PotentialState
from gkflow.grid import FULL, GridSpec, ScalarField, Spectrum
from gkflow.geometry import SplitMetric
from gkflow.scenarios import build_scenario


def field(spec, fn):
    return ScalarField.from_function(spec, fn)


@pytest.fixture(scope="session")
def spec64():
    return GridSpec.reduced(64, 64)


@pytest.fixture(scope="session")
def spec32():
    return GridSpec.reduced(32, 32)


@pytest.fixture(scope="session")
def f2(spec64):
    return build_scenario("generic-potential", spec64)


@pytest.fixture(scope="session")
def f4(spec64):
    return build_scenario("conformal-background", spec64)


@pytest.fixture(scope="session")
def full4d_data():
    """Random admissible full4d data with non-flat g0 and h, plus a potential."""
    s = GridSpec(FULL, (32, 32, 32, 32))
    rng = np.random.default_rng(2)
    c = s.coords()

    def rnd(amp):
        out = 0.0
        for _ in range(4):
            k = rng.integers(-1, 2, size=4)
            ph = rng.uniform(0, 2 * math.pi)
            out = out + amp * rng.normal() * np.cos(
                k[0] * c["x1"] + k[1] * c["x2"] + k[2] * c["x3"] + k[3] * c["x4"] + ph
            )
        return ScalarField(s, np.broadcast_to(out, s.shape))

    F = Spectrum(rnd(0.1))
    g0 = SplitMetric(1 + F.derivative("dzdzbar"), 1 - F.derivative("dwdwbar"))
    hp, hm = rnd(0.1).map(np.exp), rnd(0.1).map(np.exp)
    bg = Background(g0, hp, hm)
    return bg, PotentialState(0.0, rnd(0.1))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
