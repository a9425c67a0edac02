import numpy as np
import pytest

from gnae.graphon import AttributedGraph


def random_graph(rng, n, p=0.3, dim=0, label=None):
    upper = np.triu(rng.random((n, n)) < p, 1)
    attrs = rng.standard_normal((n, dim)) if dim else None
    return AttributedGraph(n, np.argwhere(upper), attrs, label=label)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
