import numpy as np
import pytest

from voxtex.volume import Volume


def random_volume(rng, shape=(16, 16, 16), high=65536) -> Volume:
    """Random uint16 volume with array shape ``(nz, ny, nx)``."""
    return Volume(rng.integers(0, high, size=shape).astype(np.uint16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
