import os

os.environ.setdefault("MPLBACKEND", "Agg")

import numpy as np
import pytest

from nbvplan.params import ObservationParams, SensorIntrinsics


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sensor():
    """Low-resolution sensor for fast end-to-end tests."""
    return SensorIntrinsics(width=120, height=80, fov_x_deg=70, fov_y_deg=43, range_noise_sigma=0.0)


@pytest.fixture
def small_params(small_sensor):
    """Toy-scale parameter bundle derived the same way as a real run."""
    from nbvplan.params import derive_params

    return derive_params(
        ObservationParams(r=0.05, d=0.5, psi=0.5, upsilon=0.02, tau=30, eta=0.02), small_sensor
    )


def rgbd_sensor():
    return SensorIntrinsics(width=848, height=480, fov_x_deg=70, fov_y_deg=43, range_noise_sigma=0.01)
