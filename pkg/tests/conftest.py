import logging
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fbgraph.dataio import cycle_graph
from fbgraph.design import design_filter
from fbgraph.graph import build_graph

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_power_iteration():
    # ER graphs often trip the lambda_max fallback warning; it is tested explicitly
    logging.getLogger("fbgraph.graph").setLevel(logging.ERROR)
    yield


@lru_cache(maxsize=None)
def designed(p=5, q=3, gamma=0.9, eta=0.5, **kw):
    return design_filter(p, q, gamma, eta, **kw)


@pytest.fixture
def c4():
    return cycle_graph(4)


@pytest.fixture
def two_node():
    return build_graph([(0, 1, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
