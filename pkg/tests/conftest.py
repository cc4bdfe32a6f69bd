import itertools

import numpy as np
import pytest

from instrack.core import BoundingBox


def brute_force_min(cost):
    """Exhaustive minimum over all permutations (independent oracle)."""
    k = cost.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(k)):
        best = min(best, sum(cost[i, perm[i]] for i in range(k)))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_box(rng, lo=0.0, hi=100.0):
    return BoundingBox(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(1, 40), rng.uniform(1, 40))
