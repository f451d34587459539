"""Simulated depth sensor: one ray per pixel through a uniform angular grid
over the frustum, closest-hit against the scene mesh, Gaussian range noise
along the ray."""

from __future__ import annotations

import numpy as np

from .geometry import View, normalize
from .mesh import SceneMesh
from .params import SensorIntrinsics


def camera_basis(view: View) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(forward, right, up) with world +z as the up hint."""
    fwd = view.orientation
    hint = np.array([0.0, 0.0, 1.0])
    if abs(fwd @ hint) > 0.999:
        hint = np.array([1.0, 0.0, 0.0])
    right = normalize(np.cross(fwd, hint))
    up = np.cross(right, fwd)
    return fwd, right, up


def ray_directions(view: View, intr: SensorIntrinsics) -> np.ndarray:
    """Unit directions through pixel centers, row-major (y outer, x inner)."""
    fwd, right, up = camera_basis(view)
    ax = np.radians(intr.fov_x_deg) * ((np.arange(intr.width) + 0.5) / intr.width - 0.5)
    ay = np.radians(intr.fov_y_deg) * ((np.arange(intr.height) + 0.5) / intr.height - 0.5)
    gx, gy = np.meshgrid(ax, ay)
    gx = gx.ravel()
    gy = gy.ravel()
    dirs = (
        (np.cos(gy) * np.cos(gx))[:, None] * fwd[None, :]
        + (np.cos(gy) * np.sin(gx))[:, None] * right[None, :]
        + np.sin(gy)[:, None] * up[None, :]
    )
    return dirs


class SimSensor:
    """Raycasting depth sensor with seeded Gaussian range noise."""

    def __init__(self, intrinsics: SensorIntrinsics, seed: int = 0, sigma: float | None = None):
        self.intrinsics = intrinsics
        self.sigma = intrinsics.range_noise_sigma if sigma is None else float(sigma)
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def capture(self, mesh: SceneMesh, view: View) -> np.ndarray:
        """Hit points for one exposure, in pixel order. Deterministic for a
        given seed and capture sequence."""
        dirs = ray_directions(view, self.intrinsics)
        t = mesh.raycast(view.position, dirs)
        hit = np.isfinite(t)
        t_hit = t[hit]
        if self.sigma > 0 and len(t_hit):
            t_hit = t_hit + self.sigma * self.rng.standard_normal(len(t_hit))
        return view.position + t_hit[:, None] * dirs[hit]
