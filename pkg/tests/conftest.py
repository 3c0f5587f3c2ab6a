import numpy as np
import pytest

from models.geometry import CameraIntrinsics
from models.grid import GridSpec


@pytest.fixture
def spec():
    return GridSpec()


@pytest.fixture
def small_spec():
    return GridSpec(rows=32, cols=32, resolution=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=96.0, width=640, height=192)
