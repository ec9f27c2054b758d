import numpy as np
import pytest

from graphdive.graph import Dataset, Graph, LabelSet, undirected


def random_graph(rng, n=None, f_v=9, f_e=3, p=0.35):
    n = int(rng.integers(2, 9)) if n is None else n
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return undirected(n, pairs, rng.normal(size=(n, f_v)), rng.normal(size=(len(pairs), f_e)))


def random_dataset(rng, n=8, T=1, f_v=9, f_e=3, missing=0.0, split=True):
    graphs = [random_graph(rng, f_v=f_v, f_e=f_e) for _ in range(n)]
    y = (rng.random((n, T)) < 0.4).astype(float)
    y[0] = 1.0
    y[1] = 0.0
    mask = rng.random((n, T)) >= missing
    mask[:2] = True
    tags = None
    if split:
        tags = ["train"] * n
        tags[-1] = "valid"
        tags[-2] = "valid"
    return Dataset(graphs, LabelSet(y, mask), tags)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return undirected(3, [(0, 1), (1, 2), (0, 2)], np.eye(3), np.ones((3, 1)))


@pytest.fixture
def tiny_graphs():
    rng = np.random.default_rng(7)
    return [random_graph(rng) for _ in range(4)]


ACCEPTANCE_LINES: list[str] = []
ACCEPTANCE_REPORTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for text in ACCEPTANCE_REPORTS:
        terminalreporter.write_line(text)
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
