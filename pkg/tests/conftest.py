import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_inputs(rng, n, k):
    """One n-bit string per player, keyed 1..k."""
    return {g: "".join(rng.choice(["0", "1"], size=n))
            for g in range(1, k + 1)}
