import numpy as np
import pytest

from fdafem import boundary as bd
from fdafem.mesh import criss_cross_box
from fdafem.testproblem import LShapeProblem


@pytest.fixture(scope="session")
def problem():
    return LShapeProblem()


@pytest.fixture(scope="session")
def curve(problem):
    return problem.curve


@pytest.fixture
def box():
    return criss_cross_box()


@pytest.fixture
def uniform_mesh():
    """Criss-cross box after three uniform refinements (256 triangles)."""
    tau = criss_cross_box()
    for _ in range(3):
        tau.uniform_refine()
    return tau


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def partition(curve, level, n0=8):
    return bd.make_partition(curve, n0, level)


# one line per acceptance check, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
