import numpy as np
import pytest

from gnnseed.experiment import load_fixture
from gnnseed.graph import from_edge_list


def random_graph(rng, n, p=0.4, connected_pair=True):
    """Erdos-Renyi graph, with edge (0, 1) forced so that m > 0."""
    upper = np.triu(rng.random((n, n)) < p, 1)
    if connected_pair and n > 1:
        upper[0, 1] = True
    i, j = np.nonzero(upper)
    return from_edge_list(np.column_stack([i, j]), n)


def two_cliques(size=6):
    block = [(i, j) for i in range(size) for j in range(i + 1, size)]
    edges = block + [(i + size, j + size) for i, j in block]
    y = np.repeat([0, 1], size)
    return from_edge_list(edges, 2 * size), y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def karate():
    return load_fixture("karate")


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one acceptance line."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
