import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gphier.grid import FieldState, TorusGrid

settings.register_profile(
    "gphier", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("gphier")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line32():
    return TorusGrid(1, np.pi, 32)


def smooth_field(grid, phase=0.5):
    """The standard smooth test field ``exp(sum cos x + i phase sum sin x)``, normalized."""
    x = grid.mesh()
    v = np.exp(sum(np.cos(xa) + 1j * phase * np.sin(xa) for xa in x))
    return FieldState(grid, v).normalized()


def random_field(grid, rng, decay=0.3):
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * np.exp(-decay * grid.ksq() / 2)
    return FieldState(grid, np.fft.ifftn(c)).normalized()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
