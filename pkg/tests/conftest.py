import numpy as np
import pytest

from driftfit.kernels import TruncationKernel
from driftfit.model import GaussianCP, TemperedStable, affine_model

THETA0 = (-0.5, 2.0)


@pytest.fixture
def ou():
    return affine_model(0.3)


@pytest.fixture
def ou_cp():
    return affine_model(0.3, 1.0, GaussianCP(0.1, 0.0, np.sqrt(2.0)))


@pytest.fixture
def ou_ts():
    return affine_model(0.3, 1.0, TemperedStable(0.5))


@pytest.fixture
def phi0():
    return TruncationKernel.phi0()
