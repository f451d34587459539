"""The observation planning loop.

Each iteration captures from the current view, reclassifies the cloud,
reactively adjusts the view if its target frontier survived, proposes views
for new frontiers, proactively re-aims occluded proposals, refreshes the
frontier visibility graph, and picks the next view as the vertex with the
best outdegree-per-travel ratio among those that can see the closest
proposal's frontier. The run ends when no frontiers remain.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .classify import ClassificationDelta, classify_update, demote_frontier
from .cloud import ObservedCloud, PointClass
from .geometry import View, k_nearest, normalize, rodrigues
from .params import ObservationParams
from .surface import DegenerateGeometryError, SurfaceFrame, ViewProjection, estimate_surface
from .visibility import is_occluded, optimise_view, unoccluded_mask, visibility_offset

log = logging.getLogger(__name__)


@dataclass
class PlannerState:
    proposals: dict[int, View] = field(default_factory=dict)
    frames: dict[int, SurfaceFrame] = field(default_factory=dict)
    out_edges: dict[int, list[int]] = field(default_factory=dict)
    prev_sep: dict[int, float] = field(default_factory=dict)  # last frontier/mean separation
    gain: dict[int, int] = field(default_factory=dict)  # adjustment scaling factor
    switched: dict[int, bool] = field(default_factory=dict)
    adjust_count: dict[int, int] = field(default_factory=dict)
    target_fidx: int | None = None
    target_view: View | None = None

    def drop(self, fidx: int):
        for d in (
            self.proposals,
            self.frames,
            self.out_edges,
            self.prev_sep,
            self.gain,
            self.switched,
            self.adjust_count,
        ):
            d.pop(fidx, None)
        if self.target_fidx == fidx:
            self.target_fidx = None
            self.target_view = None

    def prune_to_frontiers(self, cloud: ObservedCloud):
        frontier = cloud.classes == PointClass.FRONTIER
        for fidx in [f for f in self.proposals if not frontier[f]]:
            self.drop(fidx)


class OcclusionCache:
    """Per-iteration memo for visibility offsets and occlusion results.

    Valid only while the cloud is unmodified; the loop builds a fresh one
    after every classification update.
    """

    def __init__(self, cloud: ObservedCloud, params: ObservationParams):
        self.cloud = cloud
        self.params = params
        self._zeta: dict[int, float] = {}
        self._occluded: dict[tuple[int, bytes], bool] = {}

    def zeta(self, fidx: int, frontier: np.ndarray, frame: SurfaceFrame) -> float:
        if fidx not in self._zeta:
            self._zeta[fidx] = visibility_offset(self.cloud, frontier, frame, self.params)
        return self._zeta[fidx]

    def occluded(self, view: View, fidx: int, frontier: np.ndarray, frame: SurfaceFrame) -> bool:
        key = (fidx, view.key())
        if key not in self._occluded:
            self._occluded[key] = is_occluded(
                self.cloud, view, frontier, frame, self.params, zeta=self.zeta(fidx, frontier, frame)
            )
        return self._occluded[key]


def propose_view(frontier: np.ndarray, frame: SurfaceFrame, d: float) -> View:
    """View at distance d along the outward normal, looking back at the frontier."""
    return View(position=frontier + d * frame.normal, orientation=-frame.normal)


def propose_views(
    state: PlannerState,
    cloud: ObservedCloud,
    current_view: View,
    new_points,
    params: ObservationParams,
) -> ClassificationDelta:
    """Create proposals for frontiers that lack one. Frontiers whose local
    geometry cannot be estimated are unobservable and become outliers."""
    delta = ClassificationDelta()
    projection = (
        new_points
        if isinstance(new_points, ViewProjection)
        else ViewProjection(current_view.position, new_points)
    )
    for fidx in cloud.class_indices(PointClass.FRONTIER):
        fidx = int(fidx)
        if fidx in state.proposals:
            continue
        frontier = cloud.points[fidx]
        try:
            frame = estimate_surface(cloud, frontier, current_view, projection, params)
        except DegenerateGeometryError:
            log.debug("degenerate geometry at frontier %d; demoting", fidx)
            delta = delta.merge(demote_frontier(cloud, fidx))
            state.drop(fidx)
            continue
        state.frames[fidx] = frame
        state.proposals[fidx] = propose_view(frontier, frame, params.d)
    return delta


def _nearest_proposals(state: PlannerState, query: np.ndarray, k: int) -> list[int]:
    fidxs = list(state.proposals.keys())
    if not fidxs:
        return []
    keys = np.array([state.proposals[f].position for f in fidxs])
    return k_nearest(keys, fidxs, k, query)


def refine_views(
    state: PlannerState,
    cloud: ObservedCloud,
    current_view: View,
    params: ObservationParams,
    cache: OcclusionCache | None = None,
) -> ClassificationDelta:
    """Re-aim the tau nearest occluded proposals; demote frontiers whose
    optimised view is still occluded."""
    cache = cache or OcclusionCache(cloud, params)
    delta = ClassificationDelta()
    for fidx in _nearest_proposals(state, current_view.position, params.tau):
        view = state.proposals[fidx]
        frontier = cloud.points[fidx]
        frame = state.frames[fidx]
        if not cache.occluded(view, fidx, frontier, frame):
            continue
        better = optimise_view(
            cloud,
            frontier,
            frame,
            params,
            capture_position=cloud.capture_views[fidx],
            zeta=cache.zeta(fidx, frontier, frame),
        )
        if cache.occluded(better, fidx, frontier, frame):
            delta = delta.merge(demote_frontier(cloud, fidx))
            state.drop(fidx)
        else:
            state.proposals[fidx] = better
    return delta


def update_graph(
    state: PlannerState,
    cloud: ObservedCloud,
    current_view: View,
    params: ObservationParams,
    cache: OcclusionCache | None = None,
) -> None:
    """Refresh shared-visibility edges for the tau nearest proposals.

    An edge f_i -> f_j means frontier j is unoccluded from proposal i's
    view; edges touching dropped frontiers are discarded first.
    """
    cache = cache or OcclusionCache(cloud, params)
    live = state.proposals
    state.out_edges = {
        f: [g for g in gs if g in live] for f, gs in state.out_edges.items() if f in live
    }
    for f_i in _nearest_proposals(state, current_view.position, params.tau):
        v_i = state.proposals[f_i]
        children = _nearest_proposals(state, v_i.position, params.tau)
        zetas = [cache.zeta(f_j, cloud.points[f_j], state.frames[f_j]) for f_j in children]
        visible = unoccluded_mask(cloud, v_i, [cloud.points[f_j] for f_j in children], zetas, params)
        state.out_edges[f_i] = [f_j for f_j, ok in zip(children, visible) if ok]


def select_nbv(state: PlannerState, current_view: View) -> tuple[int, View] | None:
    """Vertex with the best outdegree / travel-distance ratio among those
    with an edge onto the closest vertex and a strictly larger outdegree;
    the closest vertex itself otherwise. None means observation complete."""
    if not state.proposals:
        state.target_fidx = None
        state.target_view = None
        return None
    fidxs = list(state.proposals.keys())
    pos = np.array([state.proposals[f].position for f in fidxs])
    dist = np.linalg.norm(pos - current_view.position, axis=1)
    nearest = fidxs[int(np.argmin(dist))]
    deg = {f: len(state.out_edges.get(f, ())) for f in fidxs}

    best = None
    best_ratio = -math.inf
    best_dist = math.inf
    for f, d in zip(fidxs, dist):
        if nearest not in state.out_edges.get(f, ()) or deg[f] <= deg[nearest]:
            continue
        ratio = deg[f] / max(d, 1e-12)
        if ratio > best_ratio or (ratio == best_ratio and d < best_dist):
            best, best_ratio, best_dist = f, ratio, d
    if best is None:
        best = nearest
    state.target_fidx = best
    state.target_view = state.proposals[best]
    return best, state.proposals[best]


@dataclass
class AdjustOutcome:
    kind: str  # "adjusted" | "switched" | "demoted"
    view: View | None
    delta: ClassificationDelta


def adjustment_terms(d: float, gain: int, s1: float, s2: float) -> tuple[float, float, float, float]:
    """Translation magnitudes and rotation angles for one view adjustment."""
    t_f = (gain + 1) * s1
    t_b = (gain + 1) * s2
    theta_b = math.atan(d * gain * s1 / (d * d + (gain + 1) * s1 * s1))
    theta_f = math.atan(d * gain * s2 / (d * d + (gain + 1) * s2 * s2))
    return t_f, t_b, theta_b, theta_f


def adjust_view(
    state: PlannerState,
    cloud: ObservedCloud,
    current_view: View,
    new_points: np.ndarray,
    params: ObservationParams,
    max_adjustments: int = 10,
) -> AdjustOutcome:
    """React to a failed capture of the current target frontier.

    While the separation between the frontier and the mean of the captured
    points keeps shrinking, the view is translated along the in-plane frame
    axes and rotated about them with geometrically growing gain. When
    progress stalls the view is reset once to the original capturing sight
    line; a second stall demotes the frontier as unobservable.
    """
    fidx = state.target_fidx
    frontier = cloud.points[fidx]
    frame = state.frames[fidx]
    prev = state.prev_sep.setdefault(fidx, math.inf)
    gain = state.gain.setdefault(fidx, 1)
    state.switched.setdefault(fidx, False)
    count = state.adjust_count.get(fidx, 0) + 1
    state.adjust_count[fidx] = count

    new_points = np.asarray(new_points, dtype=np.float64).reshape(-1, 3)
    if len(new_points) > 0:
        sep = frame.basis.T @ (frontier - new_points.mean(axis=0))
        sep_norm = float(np.linalg.norm(sep))
    else:
        sep = None
        sep_norm = math.inf  # failed capture: never an improvement

    omega = None
    if sep_norm < prev and count <= max_adjustments:
        t_f_mag, t_b_mag, theta_b, theta_f = adjustment_terms(params.d, gain, sep[1], sep[2])
        t_f = t_f_mag * frame.frontier
        t_b = t_b_mag * frame.boundary
        r_b = rodrigues(frame.boundary, theta_b)
        r_f = rodrigues(frame.frontier, theta_f)
        omega = frontier - r_f @ (t_b + r_b @ (t_f + current_view.position))
        state.prev_sep[fidx] = sep_norm
        state.gain[fidx] = 2 * gain
        kind = "adjusted"
    elif not state.switched[fidx] and count <= max_adjustments:
        omega = frontier - cloud.capture_views[fidx]
        state.prev_sep[fidx] = math.inf
        state.gain[fidx] = 1
        state.switched[fidx] = True
        kind = "switched"
    else:
        delta = demote_frontier(cloud, fidx)
        state.drop(fidx)
        return AdjustOutcome("demoted", None, delta)

    if np.linalg.norm(omega) < 1e-12:
        # orientation collapsed; treat like a stalled adjustment
        delta = demote_frontier(cloud, fidx)
        state.drop(fidx)
        return AdjustOutcome("demoted", None, delta)
    orientation = normalize(omega)
    view = View(position=frontier - params.d * orientation, orientation=orientation)
    state.proposals[fidx] = view
    return AdjustOutcome(kind, view, ClassificationDelta())


@dataclass
class SafetyCaps:
    max_views: int = 200
    max_adjustments_per_frontier: int = 10


@dataclass
class ObservationResult:
    cloud: ObservedCloud
    trajectory: list[View]
    records: list[dict]
    complete: bool

    @property
    def n_views(self) -> int:
        return len(self.trajectory)


def run(
    capture_fn,
    v0: View,
    params: ObservationParams,
    caps: SafetyCaps | None = None,
    on_view=None,
) -> ObservationResult:
    """Run the observation loop until no frontiers remain or a cap trips.

    capture_fn(view) must return an (n, 3) array of measurements. on_view,
    when given, is called with the cloud after each classification and its
    dict result is merged into that view's record (e.g. coverage).
    """
    caps = caps or SafetyCaps()
    params.validate()
    cloud = ObservedCloud(params.epsilon)
    state = PlannerState()
    current = v0
    trajectory: list[View] = []
    records: list[dict] = []
    travel = 0.0
    complete = False

    while True:
        raw = capture_fn(current)
        trajectory.append(current)

        t0 = time.perf_counter()
        _, accepted_idx = classify_update(cloud, raw, current, params)
        accepted_pts = cloud.points[accepted_idx]
        state.prune_to_frontiers(cloud)

        outcome = "first" if len(trajectory) == 1 else "target_observed"
        if state.target_fidx is not None:
            if cloud.classes[state.target_fidx] == PointClass.FRONTIER:
                adj = adjust_view(
                    state,
                    cloud,
                    current,
                    accepted_pts,
                    params,
                    max_adjustments=caps.max_adjustments_per_frontier,
                )
                outcome = adj.kind
            state.target_fidx = None
            state.target_view = None

        projection = ViewProjection(current.position, accepted_pts)
        propose_views(state, cloud, current, projection, params)
        cache = OcclusionCache(cloud, params)
        refine_views(state, cloud, current, params, cache)
        update_graph(state, cloud, current, params, cache)
        selection = select_nbv(state, current)
        nbv_time = time.perf_counter() - t0

        n_frontiers = int(np.sum(cloud.classes == PointClass.FRONTIER))
        record = {
            "view_index": len(trajectory) - 1,
            "x": float(current.position[0]),
            "y": float(current.position[1]),
            "z": float(current.position[2]),
            "ox": float(current.orientation[0]),
            "oy": float(current.orientation[1]),
            "oz": float(current.orientation[2]),
            "outcome": outcome,
            "points_total": len(cloud),
            "frontiers": n_frontiers,
            "new_accepted": int(len(accepted_idx)),
            "cum_distance_m": travel,
            "nbv_time_s": nbv_time,
            "target_fidx": -1 if selection is None else int(selection[0]),
        }
        if on_view is not None:
            record.update(on_view(cloud))
        records.append(record)

        if selection is None:
            complete = True
            break
        if len(trajectory) >= caps.max_views:
            log.warning(
                "stopping at view cap %d with %d frontiers remaining", caps.max_views, n_frontiers
            )
            break
        fidx, view = selection
        travel += float(np.linalg.norm(view.position - current.position))
        current = view
        state.target_fidx = fidx
        state.target_view = view

    return ObservationResult(cloud=cloud, trajectory=trajectory, records=records, complete=complete)
