import pytest

from graph_index import build_index
from knn_oracle import exact_knn_batch
from vecdata import gen_synthetic_split

N_POINTS = 2000
N_QUERIES = 80
DIM = 16
DEGREE = 16


@pytest.fixture(scope="session")
def clustered():
    """(base, queries): 2000 points in 8 Gaussian blobs plus 80 held-out queries."""
    return gen_synthetic_split(N_POINTS, N_QUERIES, DIM, 8, 0.15, seed=7)


@pytest.fixture(scope="session")
def base(clustered):
    return clustered[0]


@pytest.fixture(scope="session")
def queries(clustered):
    return clustered[1]


@pytest.fixture(scope="session")
def truths(base, queries):
    return exact_knn_batch(base, queries, 10)


@pytest.fixture(scope="session")
def single_index(base):
    return build_index(base, 1, DEGREE, seed=3, ghost_ratio=0.05)


@pytest.fixture(scope="session")
def sharded_index(base):
    return build_index(base, 4, DEGREE, seed=3, ghost_ratio=0.05)
