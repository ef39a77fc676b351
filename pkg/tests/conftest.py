import numpy as np
import pytest

from klgeo import FiniteDistribution
from klgeo.rng import SeededRng


def random_simplex(rng: SeededRng, n: int) -> np.ndarray:
    w = -np.log(1.0 - rng.uniform(n))
    return w / w.sum()


def random_dist(rng: SeededRng, outcomes) -> FiniteDistribution:
    return FiniteDistribution(outcomes, random_simplex(rng, len(outcomes)))


@pytest.fixture
def rng():
    return SeededRng(12345)
