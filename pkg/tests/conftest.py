import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_map(rng, w, h, low=0.0, high=1.0):
    from uniar.types import GrayMap

    return GrayMap(w, h, rng.uniform(low, high, size=(h, w)))


def rand_fixations(rng, w, h, n):
    from uniar.types import FixationSet

    pts = np.stack([rng.uniform(0, w, n), rng.uniform(0, h, n)], axis=1)
    return FixationSet(frame=(w, h), points=pts)
