import numpy as np
import pytest

from graphconf.graph import Graph


def random_graph(rng, n, n_colors=4, p=0.5, continuous=False, edge_dim=0):
    A = np.triu((rng.random((n, n)) < p).astype(float), 1)
    A = A + A.T
    if continuous:
        F = rng.normal(size=(n, 3))
    else:
        F = np.eye(n_colors)[rng.integers(0, n_colors, n)]
    X = None
    if edge_dim:
        X = rng.normal(size=(n, n, edge_dim))
        X = X + X.transpose(1, 0, 2)
    return Graph(A, F, X)


def path_graph(n=3):
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = 1.0
    return Graph(A, np.ones((n, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
