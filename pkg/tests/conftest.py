import numpy as np
import pytest

from privlearn.config import ProblemSpec
from privlearn.experiment import build_problem
from privlearn.graph import metropolis_weights, random_connected_graph


def chain_adjacency(P):
    adj = np.eye(P, dtype=bool)
    for p in range(P - 1):
        adj[p, p + 1] = adj[p + 1, p] = True
    return adj


def star_adjacency(P):
    adj = np.eye(P, dtype=bool)
    adj[0, :] = adj[:, 0] = True
    return adj


def random_left_stochastic(P, rng, density=0.6):
    """Primitive left-stochastic matrix with asymmetric weights on a random support."""
    support = rng.random((P, P)) < density
    np.fill_diagonal(support, True)
    for p in range(P - 1):  # a directed ring keeps it strongly connected
        support[p, p + 1] = support[P - 1, 0] = True
    A = support * rng.uniform(0.1, 1.0, (P, P))
    return A / A.sum(axis=0, keepdims=True)


@pytest.fixture(scope="session")
def topo30():
    return random_connected_graph(30, 0.2, seed=0, min_degree=2)


@pytest.fixture(scope="session")
def problem30():
    return build_problem(ProblemSpec(), 30)


@pytest.fixture
def chain3():
    return metropolis_weights(chain_adjacency(3))


# Acceptance criteria register one line each; printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
