import numpy as np
import pytest

from tcve.rng import CounterRng


@pytest.fixture
def rng():
    return CounterRng(42)


@pytest.fixture
def rng64():
    """Fresh float64 sample source for gradient checks."""
    r = CounterRng(777)
    return lambda shape: r.normal(shape, dtype=np.float64)
