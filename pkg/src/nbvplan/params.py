"""Observation parameter set and its derivation from sensor intrinsics.

A zero marks an unset field; the derivation cascade fills resolution radius,
target density, view distance and minimum separation from whichever subset
the user supplied, then always recomputes the neighbour-count threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    """Raised when a parameter set cannot be completed or is inconsistent."""


@dataclass(frozen=True)
class SensorIntrinsics:
    width: int  # pixels
    height: int  # pixels
    fov_x_deg: float
    fov_y_deg: float
    range_noise_sigma: float = 0.0  # simulation only, meters

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"sensor resolution must be >= 1 px, got {self.width}x{self.height}")
        if not (0.0 < self.fov_x_deg < 180.0 and 0.0 < self.fov_y_deg < 180.0):
            raise ConfigError(
                f"field of view must lie in (0, 180) degrees, got {self.fov_x_deg}x{self.fov_y_deg}"
            )
        if self.range_noise_sigma < 0:
            raise ConfigError("range noise sigma must be >= 0")

    @property
    def tan_half_x(self) -> float:
        return math.tan(math.radians(self.fov_x_deg) / 2.0)

    @property
    def tan_half_y(self) -> float:
        return math.tan(math.radians(self.fov_y_deg) / 2.0)


# Table-scale defaults for the parameters that have no derivation formula.
DESK_SCALE_DEFAULTS = dict(psi=0.5, upsilon=0.01, tau=100, eta=0.005)
BUILDING_SCALE_DEFAULTS = dict(psi=20.0, upsilon=0.15, tau=100, eta=0.05)


@dataclass(frozen=True)
class ObservationParams:
    """Full planner parameter set. Zeros in rho/r/d/epsilon mean "derive"."""

    rho: float = 0.0  # target density, points / m^3
    r: float = 0.0  # resolution radius, m
    d: float = 0.0  # view distance, m
    epsilon: float = 0.0  # minimum separation, m
    psi: float = 0.5  # occlusion search distance, m
    upsilon: float = 0.01  # visibility search distance / sample step, m
    tau: int = 100  # views processed per update
    k_min: int = 0  # derived: neighbours required for a core point
    eta: float = 0.005  # registration radius for coverage analysis, m

    def validate(self) -> "ObservationParams":
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not (0 < self.epsilon < self.r < self.psi):
            raise ConfigError(
                f"need 0 < epsilon < r < psi, got epsilon={self.epsilon} r={self.r} psi={self.psi}"
            )
        if not (0 < self.upsilon <= self.r):
            raise ConfigError(f"need 0 < upsilon <= r, got upsilon={self.upsilon} r={self.r}")
        if self.d <= 0:
            raise ConfigError(f"view distance must be positive, got {self.d}")
        if self.tau < 1 or self.k_min < 1:
            raise ConfigError(f"tau and k_min must be >= 1, got tau={self.tau} k_min={self.k_min}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        return self


def derive_params(partial: ObservationParams, sensor: SensorIntrinsics) -> ObservationParams:
    """Fill unset (zero) rho / r / d / epsilon and recompute k_min.

    r needs rho; rho needs d and r plus the sensor; d needs rho and r plus
    the sensor; epsilon needs r and rho. User-set fields are never touched.
    """
    rho, r, d, eps = partial.rho, partial.r, partial.d, partial.epsilon

    if r == 0 and rho != 0:
        r = (9.0 / (4.0 * math.pi * rho)) ** (1.0 / 3.0)

    area_factor = 4.0 * sensor.tan_half_x * sensor.tan_half_y
    if rho == 0 and d != 0 and r != 0:
        rho = (sensor.width * sensor.height) / (area_factor * (3.0 * d * d + 2.0 * r * r))

    if d == 0 and rho != 0 and r != 0:
        d_sq = (sensor.width * sensor.height) / (3.0 * area_factor * rho) - 2.0 * r * r / 3.0
        if d_sq <= 0:
            raise ConfigError(
                f"view distance is imaginary for rho={rho}, r={r} with this sensor "
                f"(d^2 = {d_sq}); lower rho or r"
            )
        d = math.sqrt(d_sq)

    if eps == 0:
        if r == 0 or rho == 0:
            raise ConfigError(
                "cannot derive epsilon: resolution radius and density are both required "
                f"(have r={r}, rho={rho})"
            )
        eps = (3.0 * r / (2.0 * math.pi * rho)) ** (1.0 / 3.0)

    if rho == 0 or r == 0 or d == 0:
        raise ConfigError(
            f"parameter set is unresolvable: rho={rho}, r={r}, d={d} after derivation; "
            "set at least rho, or r with d"
        )

    k_min = math.ceil(4.0 / 3.0 * math.pi * rho * r**3)
    return replace(partial, rho=rho, r=r, d=d, epsilon=eps, k_min=k_min).validate()


_PARAM_KEYS = {
    "rho": float,
    "r": float,
    "d": float,
    "epsilon": float,
    "psi": float,
    "upsilon": float,
    "tau": int,
    "eta": float,
}
_SENSOR_KEYS = {
    "sensor_width": int,
    "sensor_height": int,
    "fov_x_deg": float,
    "fov_y_deg": float,
    "noise_sigma": float,
}


def parse_kv_file(path) -> dict[str, str]:
    """Parse a `key = value` text file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def params_from_mapping(kv: dict[str, str]) -> tuple[ObservationParams, SensorIntrinsics]:
    """Build (derived params, sensor) from config-file keys."""
    sensor_kwargs = {}
    for key, typ in _SENSOR_KEYS.items():
        if key not in kv:
            raise ConfigError(f"missing required sensor key {key!r}")
        sensor_kwargs[key] = typ(kv[key])
    sensor = SensorIntrinsics(
        width=sensor_kwargs["sensor_width"],
        height=sensor_kwargs["sensor_height"],
        fov_x_deg=sensor_kwargs["fov_x_deg"],
        fov_y_deg=sensor_kwargs["fov_y_deg"],
        range_noise_sigma=sensor_kwargs["noise_sigma"],
    )
    p_kwargs = {}
    for key, typ in _PARAM_KEYS.items():
        if key in kv:
            p_kwargs[key] = typ(kv[key])
    partial = ObservationParams(**p_kwargs)
    return derive_params(partial, sensor), sensor


def echo_params(params: ObservationParams, sensor: SensorIntrinsics) -> str:
    """Render the fully derived parameter set as config-file lines, so every
    run's outputs carry the exact values used."""
    lines = [
        f"rho = {params.rho!r}",
        f"r = {params.r!r}",
        f"d = {params.d!r}",
        f"epsilon = {params.epsilon!r}",
        f"psi = {params.psi!r}",
        f"upsilon = {params.upsilon!r}",
        f"tau = {params.tau}",
        f"k_min = {params.k_min}",
        f"eta = {params.eta!r}",
        f"sensor_width = {sensor.width}",
        f"sensor_height = {sensor.height}",
        f"fov_x_deg = {sensor.fov_x_deg!r}",
        f"fov_y_deg = {sensor.fov_y_deg!r}",
        f"noise_sigma = {sensor.range_noise_sigma!r}",
    ]
    return "\n".join(lines) + "\n"
