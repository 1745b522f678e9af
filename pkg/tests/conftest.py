import numpy as np
import pytest

from freqshield.transforms import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, side=16, low=0.0, high=1.0):
    return Image(rng.uniform(low, high, size=(3, side, side)))


def midrange_image(rng, side=32):
    """Image whose pixels sit well inside [0,1] so clamping stays inactive."""
    return random_image(rng, side=side, low=0.3, high=0.7)
