import numpy as np
import pytest

from adaptive_pool import _backend

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
