import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wavepacket_lab.spectral import GridSpec

settings.register_profile(
    "lab", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")


@pytest.fixture
def grid2():
    return GridSpec(2, 64, 8 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
