import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbvplan.params import (
    ConfigError,
    ObservationParams,
    SensorIntrinsics,
    derive_params,
    echo_params,
    params_from_mapping,
    parse_kv_file,
)

RGBD = SensorIntrinsics(width=848, height=480, fov_x_deg=70, fov_y_deg=43)
LIDAR = SensorIntrinsics(width=1200, height=800, fov_x_deg=60, fov_y_deg=40)


class TestDeriveSmallScale:
    """Published desk-scale configuration: density and separation from (r, d)."""

    def test_density_from_r_and_d(self):
        p = derive_params(ObservationParams(r=0.03, d=0.5, psi=0.5, upsilon=0.01), RGBD)
        assert p.rho == pytest.approx(490738, rel=1e-3)

    def test_epsilon_from_r_and_rho(self):
        p = derive_params(ObservationParams(r=0.03, d=0.5, psi=0.5, upsilon=0.01), RGBD)
        assert p.epsilon == pytest.approx(0.003, rel=0.05)

    def test_k_min_is_56(self):
        p = derive_params(ObservationParams(r=0.03, d=0.5, psi=0.5, upsilon=0.01), RGBD)
        # independent evaluation of ceil(4/3 pi rho r^3)
        assert p.k_min == math.ceil(4.0 / 3.0 * math.pi * p.rho * 0.03**3) == 56


class TestDeriveLargeScale:
    """Published building-scale configuration: view distance from (rho, r)."""

    def test_view_distance(self):
        p = derive_params(ObservationParams(rho=300, r=0.15, psi=20, upsilon=0.15, eta=0.05), LIDAR)
        assert p.d == pytest.approx(35.6, rel=5e-3)

    def test_epsilon(self):
        p = derive_params(ObservationParams(rho=300, r=0.15, psi=20, upsilon=0.15, eta=0.05), LIDAR)
        assert p.epsilon == pytest.approx(0.06, rel=0.05)


def test_r_formula_inverts_to_unity():
    p = derive_params(
        ObservationParams(rho=9.0 / (4.0 * math.pi), d=1.0, psi=2.0, upsilon=0.5, eta=0.1), RGBD
    )
    assert p.r == pytest.approx(1.0, abs=1e-12)


def test_user_values_untouched():
    p = derive_params(ObservationParams(r=0.03, d=0.5, epsilon=0.004, psi=0.5, upsilon=0.01), RGBD)
    assert p.r == 0.03 and p.d == 0.5 and p.epsilon == 0.004


def test_round_trip_rho_then_d():
    base = derive_params(ObservationParams(r=0.03, d=0.5, psi=0.5, upsilon=0.01), RGBD)
    again = derive_params(
        ObservationParams(rho=base.rho, r=0.03, psi=0.5, upsilon=0.01), RGBD
    )
    assert again.d == pytest.approx(0.5, rel=1e-6)


@given(
    r=st.floats(0.01, 0.1),
    d=st.floats(0.3, 3.0),
)
def test_round_trip_property(r, d):
    forward = derive_params(ObservationParams(r=r, d=d, psi=10.0, upsilon=r / 2), RGBD)
    back = derive_params(ObservationParams(rho=forward.rho, r=r, psi=10.0, upsilon=r / 2), RGBD)
    assert back.d == pytest.approx(d, rel=1e-6)


def test_view_distance_decreases_with_density():
    last = math.inf
    for rho in (100, 300, 1000, 5000):
        p = derive_params(ObservationParams(rho=rho, r=0.15, psi=20, upsilon=0.15, eta=0.05), LIDAR)
        assert p.d < last
        last = p.d


def test_unresolvable_specification():
    with pytest.raises(ConfigError):
        derive_params(ObservationParams(), RGBD)
    with pytest.raises(ConfigError):
        derive_params(ObservationParams(d=0.5), RGBD)  # rho and r both missing


def test_imaginary_view_distance_names_parameters():
    with pytest.raises(ConfigError, match="rho"):
        derive_params(ObservationParams(rho=1e9, r=0.15, psi=20, upsilon=0.15), LIDAR)


def test_validate_rejects_bad_orderings():
    with pytest.raises(ConfigError):
        ObservationParams(rho=1, r=0.1, d=1, epsilon=0.2, psi=0.5, upsilon=0.05, k_min=1).validate()
    with pytest.raises(ConfigError):
        ObservationParams(rho=1, r=0.1, d=1, epsilon=0.01, psi=0.5, upsilon=0.2, k_min=1).validate()


def test_sensor_validation():
    with pytest.raises(ConfigError):
        SensorIntrinsics(width=0, height=10, fov_x_deg=60, fov_y_deg=40)
    with pytest.raises(ConfigError):
        SensorIntrinsics(width=10, height=10, fov_x_deg=180, fov_y_deg=40)


def test_config_file_round_trip(tmp_path):
    cfg = tmp_path / "run.txt"
    cfg.write_text(
        "# sensor block\n"
        "sensor_width = 848\n"
        "sensor_height = 480\n"
        "fov_x_deg = 70\n"
        "fov_y_deg = 43\n"
        "noise_sigma = 0.01\n"
        "r = 0.03  # resolution radius\n"
        "d = 0.5\n"
        "psi = 0.5\n"
        "upsilon = 0.01\n"
    )
    params, sensor = params_from_mapping(parse_kv_file(cfg))
    assert params.rho == pytest.approx(490738, rel=1e-3)
    assert sensor.range_noise_sigma == 0.01
    echoed = echo_params(params, sensor)
    assert f"k_min = {params.k_min}" in echoed
    assert "rho = " in echoed


def test_config_file_rejects_garbage(tmp_path):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("this is not a key value line\n")
    with pytest.raises(ConfigError):
        parse_kv_file(cfg)
