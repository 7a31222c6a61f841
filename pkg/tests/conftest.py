import numpy as np
import pytest

from lindiff.gaussian import DataMoments, SpectrumSpec, make_covariance


@pytest.fixture(scope="session")
def model16():
    """16-mode log-spaced spectrum over four decades, fixed seed."""
    return make_covariance(SpectrumSpec("log-spaced", {"lo": 1e-3, "hi": 10.0}), 16, 7)


@pytest.fixture(scope="session")
def moments16(model16):
    return DataMoments(np.zeros(16), model16.covariance())


@pytest.fixture(scope="session")
def model6():
    return make_covariance(SpectrumSpec("log-spaced", {"lo": 0.05, "hi": 4.0}), 6, 3)


@pytest.fixture(scope="session")
def moments6(model6):
    return DataMoments(np.zeros(6), model6.covariance())
