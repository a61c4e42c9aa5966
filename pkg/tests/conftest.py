import numpy as np
import pytest

from qaga.generators import ChimeraSpec, chimera, generate
from qaga.ising import IsingModel, SpinGraph


def two_var(J=-1.0, h=(0.0, 0.0)):
    return IsingModel(SpinGraph.from_edges(2, [(0, 1)]), np.array(h, float), np.array([J]))


def k44(J=-1.0):
    g = chimera(ChimeraSpec(1, 1, 4))
    return IsingModel(g, np.zeros(g.num_vars), np.full(g.num_edges, J))


@pytest.fixture(scope="session")
def c224():
    return chimera(ChimeraSpec(2, 2, 4))


@pytest.fixture(scope="session")
def ran1_small(c224):
    return generate("ran1", c224, 11)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
