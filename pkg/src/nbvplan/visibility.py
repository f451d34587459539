"""Sight-line occlusion tests and maximin view optimization.

A frontier is occluded from a view when any stored measurement lies within
the visibility search distance of a sample on the sight line. Occluded
proposals are re-aimed by projecting nearby measurements onto a unit sphere
and finding the direction maximally separated from all of them, via the
complementary smallest-enclosing-cap programs solved with SLSQP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .cloud import ObservedCloud
from .geometry import View, fibonacci_sphere, normalize
from .params import ObservationParams
from .surface import SurfaceFrame

log = logging.getLogger(__name__)

FULL_SPHERE_DEGENERACY = 1e-4
MAX_ITER = 200
_COARSE_SEED_DIRS = 512
_MAX_CONSTRAINTS = 2048
# Occupancy is an open ball shrunk by a relative tolerance: the frontier
# itself sits at exactly one step from the first offset/sight sample, and
# rounding must not flip it into an occluder.
_OCC_TOL = 1.0 - 1e-9


class OptimizationError(RuntimeError):
    """Cap solver failed to reach a feasible solution; carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def visibility_offset(
    cloud: ObservedCloud,
    frontier: np.ndarray,
    frame: SurfaceFrame,
    params: ObservationParams,
) -> float:
    """Distance along the outward normal to the first empty upsilon-ball.

    Steps in upsilon increments starting one step off the surface and stops
    at the first free sample, or saturates at the first step at or beyond
    the occlusion search distance.
    """
    steps = int(np.ceil(params.psi / params.upsilon))
    ks = np.arange(1, steps + 1, dtype=np.float64)
    centers = frontier[None, :] + ks[:, None] * params.upsilon * frame.normal[None, :]
    occupied = cloud.nearest_dists(centers, within=params.upsilon) < params.upsilon * _OCC_TOL
    free = np.flatnonzero(~occupied)
    k = int(free[0]) + 1 if len(free) else steps
    return k * params.upsilon


def sight_samples(view: View, frontier: np.ndarray, zeta: float, params: ObservationParams) -> np.ndarray:
    """Sample points along the view->frontier sight line, from a zeta offset
    back to psi. The terminal sample at exactly psi is always included."""
    o_s = normalize(frontier - view.position)
    if zeta > params.psi:
        return np.empty((0, 3))
    ds = np.arange(zeta, params.psi, params.upsilon)
    if len(ds) == 0 or ds[-1] < params.psi:
        ds = np.append(ds, params.psi)
    return frontier[None, :] - ds[:, None] * o_s[None, :]


def is_occluded(
    cloud: ObservedCloud,
    view: View,
    frontier: np.ndarray,
    frame: SurfaceFrame,
    params: ObservationParams,
    zeta: float | None = None,
) -> bool:
    """True when a stored point lies within upsilon of any sight-line sample."""
    if zeta is None:
        zeta = visibility_offset(cloud, frontier, frame, params)
    samples = sight_samples(view, frontier, zeta, params)
    if len(samples) == 0:
        return False
    return bool(np.any(cloud.nearest_dists(samples, within=params.upsilon) < params.upsilon * _OCC_TOL))


def unoccluded_mask(
    cloud: ObservedCloud,
    view: View,
    frontiers,
    zetas,
    params: ObservationParams,
) -> np.ndarray:
    """Vectorised is_occluded for many frontiers against one view: one tree
    query over the concatenated sight samples."""
    pieces = [sight_samples(view, f, z, params) for f, z in zip(frontiers, zetas)]
    lengths = [len(p) for p in pieces]
    out = np.ones(len(pieces), dtype=bool)
    if sum(lengths) == 0:
        return out
    occ = cloud.nearest_dists(np.concatenate(pieces), within=params.upsilon) < params.upsilon * _OCC_TOL
    at = 0
    for i, n in enumerate(lengths):
        out[i] = not bool(np.any(occ[at : at + n]))
        at += n
    return out


@dataclass
class SphericalCapSolution:
    n: np.ndarray  # plane normal, not necessarily unit
    e: float
    branch: str  # "full_sphere" | "hemisphere"

    @property
    def direction(self) -> np.ndarray:
        return normalize(self.n)


def _polish(direction: np.ndarray, dirs: np.ndarray, branch: str) -> tuple[np.ndarray, float] | None:
    """Exact-feasible (n, e) for a fixed axis: scale so the cap plane touches
    the binding occluder. Returns None when the branch is infeasible there."""
    u = normalize(direction)
    if branch == "full_sphere":
        c = float(np.max(dirs @ u))
        if c <= 0.0:
            return u * 1e-9, 0.0  # occluders within a hemisphere: program degenerates to e = 0
        return c * u, c * c
    g = float(np.min(dirs @ u))
    if g <= 0.0:
        return None
    return g * u, g * g


def _coarse_axis(dirs: np.ndarray, branch: str) -> np.ndarray:
    """Best axis over a fixed direction lattice, by the branch objective."""
    lattice = fibonacci_sphere(_COARSE_SEED_DIRS)
    dots = lattice @ dirs.T
    if branch == "full_sphere":
        score = dots.max(axis=1)  # want the smallest max-cosine
        return lattice[int(np.argmin(score))]
    score = dots.min(axis=1)  # want the largest min-cosine
    return lattice[int(np.argmax(score))]


def _solve_branch(dirs: np.ndarray, init_dir: np.ndarray, branch: str) -> tuple[np.ndarray, float] | None:
    """One SLSQP run of the requested program followed by the exact polish."""
    sign = 1.0 if branch == "full_sphere" else -1.0
    start = _polish(init_dir, dirs, branch)
    if start is None:
        start = _polish(_coarse_axis(dirs, branch), dirs, branch)
        if start is None:
            return None
    n0, e0 = start
    x0 = np.array([n0[0], n0[1], n0[2], min(max(e0, 0.0), 1.0)])

    if branch == "full_sphere":
        # e <= n.n and e >= n.j for all j
        cons = [
            {
                "type": "ineq",
                "fun": lambda x: x[:3] @ x[:3] - x[3],
                "jac": lambda x: np.array([2 * x[0], 2 * x[1], 2 * x[2], -1.0]),
            },
            {
                "type": "ineq",
                "fun": lambda x: x[3] - dirs @ x[:3],
                "jac": lambda x: np.hstack([-dirs, np.ones((len(dirs), 1))]),
            },
        ]
    else:
        cons = [
            {
                "type": "ineq",
                "fun": lambda x: x[3] - x[:3] @ x[:3],
                "jac": lambda x: np.array([-2 * x[0], -2 * x[1], -2 * x[2], 1.0]),
            },
            {
                "type": "ineq",
                "fun": lambda x: dirs @ x[:3] - x[3],
                "jac": lambda x: np.hstack([dirs, -np.ones((len(dirs), 1))]),
            },
        ]
    res = minimize(
        lambda x: sign * x[3],
        x0,
        jac=lambda x: np.array([0.0, 0.0, 0.0, sign]),
        method="SLSQP",
        bounds=[(-2, 2)] * 3 + [(0, 1)],
        constraints=cons,
        options={"maxiter": MAX_ITER, "ftol": 1e-12},
    )
    candidates = [x0[:3]]
    if np.linalg.norm(res.x[:3]) > 1e-12:
        candidates.append(res.x[:3])
    best = None
    for cand in candidates:
        polished = _polish(cand, dirs, branch)
        if polished is None:
            continue
        if best is None:
            best = polished
        elif branch == "full_sphere" and polished[1] < best[1]:
            best = polished
        elif branch == "hemisphere" and polished[1] > best[1]:
            best = polished
    return best


def solve_min_cap(occluder_dirs: np.ndarray, init: np.ndarray) -> SphericalCapSolution:
    """Maximin free direction against unit occluder directions.

    Runs the full-sphere program first (valid when the occluders span more
    than a hemisphere); a near-zero optimum means they fit inside one, and
    the hemisphere program takes over. The SLSQP result is refined from both
    the given initial direction and a coarse lattice seed, and the returned
    pair is re-scaled so every constraint holds exactly.
    """
    dirs = np.atleast_2d(np.asarray(occluder_dirs, dtype=np.float64))
    if len(dirs) == 0:
        raise ValueError("occluder set must be non-empty")
    init = normalize(init)

    full_candidates = []
    for seed in (init, _coarse_axis(dirs, "full_sphere")):
        got = _solve_branch(dirs, seed, "full_sphere")
        if got is not None:
            full_candidates.append(got)
    if not full_candidates:
        raise OptimizationError("full-sphere cap program produced no iterate")
    n_full, e_full = min(full_candidates, key=lambda t: t[1])
    if e_full > FULL_SPHERE_DEGENERACY:
        return SphericalCapSolution(n=n_full, e=e_full, branch="full_sphere")

    hemi_candidates = []
    for seed in (-init, _coarse_axis(dirs, "hemisphere")):
        got = _solve_branch(dirs, seed, "hemisphere")
        if got is not None:
            hemi_candidates.append(got)
    if not hemi_candidates:
        # Occluders straddle the hemisphere boundary: the full-sphere answer
        # (tiny but feasible cap) is the best available iterate.
        return SphericalCapSolution(n=n_full, e=e_full, branch="full_sphere")
    n_h, e_h = max(hemi_candidates, key=lambda t: t[1])
    return SphericalCapSolution(n=n_h, e=e_h, branch="hemisphere")


def _thin_directions(dirs: np.ndarray) -> np.ndarray:
    """Cap the constraint count by angular binning, keeping first occurrences."""
    if len(dirs) <= _MAX_CONSTRAINTS:
        return dirs
    cell = 0.02  # ~1.1 degrees
    while True:
        keys = np.round(dirs / cell).astype(np.int64)
        _, first = np.unique(keys, axis=0, return_index=True)
        if len(first) <= _MAX_CONSTRAINTS:
            return dirs[np.sort(first)]
        cell *= 1.6


def optimise_view(
    cloud: ObservedCloud,
    frontier: np.ndarray,
    frame: SurfaceFrame,
    params: ObservationParams,
    capture_position: np.ndarray,
    zeta: float | None = None,
) -> View:
    """Unoccluded view of a frontier via the spherical-cap maximin.

    Measurements within psi of the frontier are projected onto a unit
    sphere centred a visibility offset back along the capturing sight line;
    the optimised orientation looks at the frontier from the direction
    farthest from all projections.
    """
    if zeta is None:
        zeta = visibility_offset(cloud, frontier, frame, params)
    o_obs = normalize(frontier - capture_position)
    center = frontier - zeta * o_obs
    idx = cloud.neighbors_within(frontier, params.psi)
    rel = cloud.points[idx] - center
    norms = np.linalg.norm(rel, axis=1)
    keep = norms > 1e-12
    if not np.any(keep):
        # Nothing nearby to avoid: fall back to the capturing sight line,
        # which is known to be unoccluded.
        return View(position=frontier - params.d * o_obs, orientation=o_obs)
    dirs = _thin_directions(rel[keep] / norms[keep, None])

    sol = solve_min_cap(dirs, init=-o_obs)
    if sol.branch == "full_sphere":
        orientation = -sol.direction
    else:
        orientation = sol.direction
    return View(position=frontier - params.d * orientation, orientation=orientation)


def maximin_direction_oracle(occluder_dirs: np.ndarray, samples: int = 10_000) -> np.ndarray:
    """Brute-force maximin direction over a dense sphere lattice (test oracle)."""
    dirs = np.atleast_2d(np.asarray(occluder_dirs, dtype=np.float64))
    lattice = fibonacci_sphere(samples)
    worst = (lattice @ dirs.T).max(axis=1)  # cos of nearest occluder
    return lattice[int(np.argmin(worst))]
