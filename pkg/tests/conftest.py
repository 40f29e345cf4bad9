import time

import numpy as np
import pytest

from polysweep.discopt import build_problem, solve
from polysweep.scenario import steering_ocp


@pytest.fixture(scope="session")
def steering():
    return steering_ocp()


@pytest.fixture(scope="session")
def steering_runs(steering):
    """Solved steering instances at levels 0 and 1 with wall-clock times."""
    runs = {}
    for k in (0, 1):
        t0 = time.perf_counter()
        inst = build_problem(steering, k)
        res = solve(inst)
        runs[k] = (inst, res, time.perf_counter() - t0)
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
