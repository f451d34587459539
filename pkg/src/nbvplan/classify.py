"""Incremental core/frontier/outlier maintenance.

A point is core when its closed r-ball holds at least k_min stored points
(itself included), frontier when it is below the threshold but touches a
core point, and outlier otherwise. Updates recompute exactly the points
whose neighbour count or core adjacency can have changed: everything within
r of an accepted point, plus everything within r of a point newly promoted
to core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import ObservedCloud, PointClass
from .geometry import View
from .params import ObservationParams


@dataclass
class ClassificationDelta:
    """Class transitions caused by one update, as point indices."""

    newly_core: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    newly_frontier: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    newly_outlier: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    removed_frontiers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def merge(self, other: "ClassificationDelta") -> "ClassificationDelta":
        return ClassificationDelta(
            np.concatenate([self.newly_core, other.newly_core]),
            np.concatenate([self.newly_frontier, other.newly_frontier]),
            np.concatenate([self.newly_outlier, other.newly_outlier]),
            np.concatenate([self.removed_frontiers, other.removed_frontiers]),
        )


def _delta_from_transitions(before: dict[int, int], after: np.ndarray) -> ClassificationDelta:
    core, frontier, outlier, removed = [], [], [], []
    for idx, old in before.items():
        new = int(after[idx])
        if new == old:
            continue
        if new == PointClass.CORE:
            core.append(idx)
        elif new == PointClass.FRONTIER:
            frontier.append(idx)
        else:
            outlier.append(idx)
        if old == PointClass.FRONTIER:
            removed.append(idx)
    return ClassificationDelta(
        np.array(sorted(core), dtype=np.int64),
        np.array(sorted(frontier), dtype=np.int64),
        np.array(sorted(outlier), dtype=np.int64),
        np.array(sorted(removed), dtype=np.int64),
    )


def classify_update(
    cloud: ObservedCloud,
    new_points,
    current_view: View,
    params: ObservationParams,
) -> tuple[ClassificationDelta, np.ndarray]:
    """Filter-insert a measurement batch and restore the class partition.

    Returns the delta and the indices of accepted points. The final
    partition depends only on the resulting point set, not on batch order.
    """
    new_points = np.asarray(new_points, dtype=np.float64).reshape(-1, 3)
    if new_points.shape[0] == 0:
        return ClassificationDelta(), np.empty(0, dtype=np.int64)

    accepted = cloud.insert_filtered(new_points, current_view)
    if len(accepted) == 0:
        return ClassificationDelta(), accepted

    from scipy.spatial import cKDTree

    r = params.r
    k_min = params.k_min
    pts = cloud.points
    cls = cloud.classes

    # Core points never change (counts only grow), so reclassification is
    # confined to non-core points whose neighbourhood gained an accepted point.
    noncore = np.flatnonzero(cls != PointClass.CORE)
    acc_tree = cKDTree(pts[accepted])
    near_acc, _ = acc_tree.query(pts[noncore], k=1)
    stage1 = noncore[near_acc <= r]

    before = {int(i): int(cls[i]) for i in stage1}
    for i in accepted:
        before[int(i)] = -1  # no class yet: whatever it ends up as is a transition

    # |N| >= k_min iff the k_min-th nearest stored point (self included) is within r
    kth = cloud.tree.query(pts[stage1], k=[k_min])[0][:, 0] if len(stage1) else np.empty(0)
    promote = kth <= r
    newly_core = stage1[promote]
    cloud.set_class(newly_core, PointClass.CORE)

    # A promotion can flip outliers to frontiers anywhere within r of it.
    pending = stage1[~promote]
    if len(newly_core) > 0:
        others = np.flatnonzero(cloud.classes != PointClass.CORE)
        nc_tree = cKDTree(pts[newly_core])
        near_nc, _ = nc_tree.query(pts[others], k=1)
        extra = others[near_nc <= r]
        for i in extra:
            before.setdefault(int(i), int(cls[i]))
        pending = np.unique(np.concatenate([pending, extra]))

    if len(pending) > 0:
        core_idx = cloud.class_indices(PointClass.CORE)
        if len(core_idx) > 0:
            core_tree = cKDTree(pts[core_idx])
            near_core = core_tree.query(pts[pending], k=1)[0] <= r
        else:
            near_core = np.zeros(len(pending), dtype=bool)
        cloud.set_class(pending[near_core], PointClass.FRONTIER)
        cloud.set_class(pending[~near_core], PointClass.OUTLIER)

    return _delta_from_transitions(before, cloud.classes), accepted


def demote_frontier(cloud: ObservedCloud, idx: int) -> ClassificationDelta:
    """Planner-side demotion of an unobservable frontier to outlier."""
    if cloud.classes[idx] != PointClass.FRONTIER:
        raise ValueError(f"point {idx} is not a frontier")
    cloud.set_class(idx, PointClass.OUTLIER)
    one = np.array([idx], dtype=np.int64)
    return ClassificationDelta(newly_outlier=one, removed_frontiers=one.copy())


def brute_force_partition(points: np.ndarray, r: float, k_min: int) -> np.ndarray:
    """O(n^2) from-scratch classification of a finished point set.

    Independent of the incremental path; used as the reference oracle.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(points)
    out = np.full(n, int(PointClass.OUTLIER), dtype=np.int8)
    if n == 0:
        return out
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    within = d2 <= r * r
    counts = within.sum(axis=1)
    is_core = counts >= k_min
    out[is_core] = int(PointClass.CORE)
    touches_core = (within & is_core[None, :]).any(axis=1)
    out[~is_core & touches_core] = int(PointClass.FRONTIER)
    return out
