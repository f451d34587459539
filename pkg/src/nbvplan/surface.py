"""Local surface frame at a frontier point.

The frame comes from an eigendecomposition of the centred r-neighbourhood:
the normal is the least-variance axis, the frontier vector is the in-plane
axis pointing toward the unobserved side, and the boundary vector completes
the right-handed triple. The outward normal direction is picked by walking
both candidate directions and checking which sight line is clear of
measurements projected onto a unit sphere around the current view.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cloud import ObservedCloud
from .geometry import View, normalize
from .params import ObservationParams

log = logging.getLogger(__name__)


class DegenerateGeometryError(ValueError):
    """Neighbourhood too small or too flat-degenerate to define a frame."""


@dataclass
class SurfaceFrame:
    normal: np.ndarray
    frontier: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        for a, b in ((self.normal, self.frontier), (self.normal, self.boundary), (self.frontier, self.boundary)):
            if abs(float(a @ b)) > 1e-6:
                raise ValueError("frame axes are not orthogonal")

    @property
    def basis(self) -> np.ndarray:
        """Columns [normal, frontier, boundary]."""
        return np.column_stack([self.normal, self.frontier, self.boundary])


class ViewProjection:
    """Capture measurements projected onto a unit sphere around the view.

    Precomputes unit directions and ranges once per capture so every
    frontier processed for that view reuses them.
    """

    def __init__(self, view_position: np.ndarray, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        rel = points - np.asarray(view_position, dtype=np.float64)
        dist = np.linalg.norm(rel, axis=1)
        ok = dist > 1e-12
        rel, dist = rel[ok], dist[ok]
        order = np.argsort(dist, kind="stable")
        self.dists = dist[order]
        self.units = rel[order] / self.dists[:, None]

    def occludes(self, direction: np.ndarray, max_dist: float, upsilon: float) -> bool:
        """Any projected measurement with range < max_dist within a chord
        distance upsilon of the projected direction?"""
        k = int(np.searchsorted(self.dists, max_dist, side="left"))
        if k == 0:
            return False
        # strictly-inside chord threshold, shrunk against boundary rounding:
        # chord < u on the unit sphere <=> dot > 1 - u^2 / 2
        u = upsilon * (1.0 - 1e-9)
        return bool(np.max(self.units[:k] @ direction) > 1.0 - 0.5 * u * u)


def direct_normal(
    current_view: View,
    frontier: np.ndarray,
    candidate_normal: np.ndarray,
    new_points,
    params: ObservationParams,
) -> tuple[np.ndarray, bool]:
    """Orient a surface normal outward by sight-line visibility.

    Walks sample points from the frontier along +/- the candidate in
    upsilon steps; the first direction whose projected neighbourhood is
    free of closer measurements wins. Returns (normal, confident); the
    candidate comes back unchanged with confident=False when the walk
    exhausts the occlusion search distance undecided.
    """
    n = normalize(candidate_normal)
    proj = new_points if isinstance(new_points, ViewProjection) else ViewProjection(current_view.position, new_points)
    w_pos = frontier - current_view.position
    w_neg = w_pos.copy()
    max_steps = int(np.ceil(params.psi / params.upsilon))
    for _ in range(max_steps):
        w_pos = w_pos + params.upsilon * n
        w_neg = w_neg - params.upsilon * n
        limit = np.linalg.norm(w_pos)
        pos_hit = proj.occludes(w_pos / limit, limit, params.upsilon)
        n_neg = np.linalg.norm(w_neg)
        if n_neg < 1e-12:
            neg_hit = False  # sample collapsed onto the view position; nothing can project there
        else:
            neg_hit = proj.occludes(w_neg / n_neg, limit, params.upsilon)
        if not pos_hit or not neg_hit:
            if pos_hit and not neg_hit:
                return -n, True
            return n, True
    log.debug("normal direction undecided after psi walk at frontier %s", frontier)
    return n, False


def estimate_surface(
    cloud: ObservedCloud,
    frontier: np.ndarray,
    current_view: View,
    new_points,
    params: ObservationParams,
) -> SurfaceFrame:
    """Estimate the (normal, frontier, boundary) frame around a frontier point."""
    frontier = np.asarray(frontier, dtype=np.float64)
    idx = cloud.neighbors_within(frontier, params.r)
    nbhd = cloud.points[idx]
    if len(nbhd) == 0 or np.min(np.linalg.norm(nbhd - frontier, axis=1)) > 0.0:
        nbhd = np.vstack([nbhd, frontier]) if len(nbhd) else frontier[None, :]
    if len(nbhd) < 3:
        raise DegenerateGeometryError(f"only {len(nbhd)} points within r of frontier {frontier}")

    diffs = nbhd - frontier
    a = diffs.T @ diffs
    evals, evecs = np.linalg.eigh(a)  # ascending; symmetric 3x3
    if evals[2] <= 0.0 or evals[1] <= 1e-10 * evals[2]:
        raise DegenerateGeometryError(
            f"rank-deficient neighbourhood at {frontier}: eigenvalues {evals}"
        )

    normal, _confident = direct_normal(current_view, frontier, evecs[:, 0], new_points, params)

    p_bar = np.mean(frontier - nbhd, axis=0)
    dots = np.abs(p_bar @ evecs[:, 1:])
    pick = 1 if dots[0] >= dots[1] else 2
    front = evecs[:, pick]
    if np.linalg.norm(p_bar) < 1e-9 * params.r:
        log.debug("symmetric neighbourhood at %s; frontier vector sign left as computed", frontier)
    elif p_bar @ front < 0:
        front = -front
    boundary = np.cross(normal, front)
    return SurfaceFrame(normal=normal, frontier=front, boundary=normalize(boundary))
