import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ugnn.graph import build_graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)


def dense_a_tilde(graph) -> np.ndarray:
    a = graph.adjacency.to_dense() + np.eye(graph.num_nodes)
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
