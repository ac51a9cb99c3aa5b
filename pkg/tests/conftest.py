import numpy as np
import pytest

from pc3dnoc.topology import build_topology, load_preset

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def p_s1():
    return load_preset("p_s1")


@pytest.fixture(scope="session")
def small():
    """2x2x2 mesh with two diagonal elevators."""
    return build_topology((2, 2, 2), [(0, 0), (1, 1)])
