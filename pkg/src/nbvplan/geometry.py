"""Small geometric primitives shared across the planner: points, unit
vectors, sensor views, rotations and nearest-neighbour helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9


def as_point(p) -> np.ndarray:
    """Coerce to a finite float64 3-vector."""
    p = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point has non-finite coordinates: {p}")
    return p


def as_unit(v) -> np.ndarray:
    """Coerce to a float64 3-vector and check unit norm to 1e-9."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or abs(n - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"vector is not unit-norm (|v| = {n}): {v}")
    return v


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass
class View:
    """A sensor pose: position plus unit orientation (where it looks)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.position = as_point(self.position)
        self.orientation = as_unit(self.orientation)

    def key(self) -> bytes:
        """Hashable exact identity of the pose (for per-iteration caches)."""
        return self.position.tobytes() + self.orientation.tobytes()


def skew(u: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -u[2], u[1]],
            [u[2], 0.0, -u[0]],
            [-u[1], u[0], 0.0],
        ]
    )


def rodrigues(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rotation matrix about a unit axis: R = I + sin(t) K + (1-cos(t)) K^2."""
    k = skew(np.asarray(axis, dtype=np.float64))
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def k_nearest(keys: np.ndarray, values: list, k: int, query: np.ndarray) -> list:
    """Values of the k nearest keys to `query`, ascending by distance.

    Distance ties are broken by the original sequence order so repeated
    runs pick identical neighbours.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    keys = np.asarray(keys, dtype=np.float64).reshape(-1, 3)
    if len(keys) != len(values):
        raise ValueError("keys and values length mismatch")
    if len(keys) == 0:
        return []
    d = np.linalg.norm(keys - np.asarray(query, dtype=np.float64), axis=1)
    order = np.argsort(d, kind="stable")[: min(k, len(values))]
    return [values[i] for i in order]


def fibonacci_sphere(n: int) -> np.ndarray:
    """n roughly-uniform unit directions (golden-spiral lattice)."""
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass
class Aabb:
    """Closed axis-aligned box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = as_point(self.lo)
        self.hi = as_point(self.hi)
        if not np.all(self.hi > self.lo):
            raise ValueError(f"box must have positive extent: lo={self.lo} hi={self.hi}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
