"""Unstructured observation cloud: append-only measurements with a
core/frontier/outlier class per point, the position of the view that first
captured each point, and spatial queries backed by a lazily rebuilt KD-tree.

Insertion enforces a minimum pairwise separation (closed ball, <= eps
rejects) with a greedy sequential filter so batch order matters exactly as
much as sequential insertion would.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .geometry import Aabb, View, as_point

_CELL_OFF = np.int64(1 << 20)


class PointClass(IntEnum):
    CORE = 0
    FRONTIER = 1
    OUTLIER = 2


@njit(cache=True)
def _eps_greedy(new_pts, seed_pts, eps):
    """Greedy minimum-separation filter.

    Keeps new_pts[i] iff no seed point and no earlier-kept new point lies
    within eps (closed ball). Points are binned into an eps-sized spatial
    hash so only the 27 surrounding cells are scanned per candidate.
    """
    n_new = new_pts.shape[0]
    n_seed = seed_pts.shape[0]
    cap = n_seed + n_new
    table_size = 16
    while table_size < 4 * (cap + 1):
        table_size <<= 1
    mask = table_size - 1

    slot_key = np.full(table_size, -1, dtype=np.int64)
    slot_head = np.full(table_size, -1, dtype=np.int32)
    nxt = np.full(cap, -1, dtype=np.int32)
    pts = np.empty((cap, 3), dtype=np.float64)

    inv = 1.0 / eps
    eps2 = eps * eps
    count = 0
    keep = np.zeros(n_new, dtype=np.bool_)

    for phase in range(2):
        n_phase = n_seed if phase == 0 else n_new
        src = seed_pts if phase == 0 else new_pts
        for i in range(n_phase):
            px = src[i, 0]
            py = src[i, 1]
            pz = src[i, 2]
            ix = np.int64(np.floor(px * inv))
            iy = np.int64(np.floor(py * inv))
            iz = np.int64(np.floor(pz * inv))

            ok = True
            if phase == 1:
                for dx in range(-1, 2):
                    for dy in range(-1, 2):
                        for dz in range(-1, 2):
                            key = (
                                ((ix + dx + _CELL_OFF) << 42)
                                | ((iy + dy + _CELL_OFF) << 21)
                                | (iz + dz + _CELL_OFF)
                            )
                            h = key * np.int64(-7046029254386353131)
                            h ^= h >> 31
                            s = h & mask
                            while slot_key[s] != -1 and slot_key[s] != key:
                                s = (s + 1) & mask
                            if slot_key[s] == key:
                                j = slot_head[s]
                                while j != -1:
                                    d2 = (
                                        (pts[j, 0] - px) ** 2
                                        + (pts[j, 1] - py) ** 2
                                        + (pts[j, 2] - pz) ** 2
                                    )
                                    if d2 <= eps2:
                                        ok = False
                                        break
                                    j = nxt[j]
                            if not ok:
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    continue
                keep[i] = True

            key = ((ix + _CELL_OFF) << 42) | ((iy + _CELL_OFF) << 21) | (iz + _CELL_OFF)
            h = key * np.int64(-7046029254386353131)
            h ^= h >> 31
            s = h & mask
            while slot_key[s] != -1 and slot_key[s] != key:
                s = (s + 1) & mask
            slot_key[s] = key
            nxt[count] = slot_head[s]
            slot_head[s] = count
            pts[count, 0] = px
            pts[count, 1] = py
            pts[count, 2] = pz
            count += 1

    return keep


class ObservedCloud:
    """All accepted sensor measurements plus per-point class and capture view."""

    def __init__(self, epsilon: float):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)
        self._pts = np.empty((0, 3), dtype=np.float64)
        self._cls = np.empty(0, dtype=np.int8)
        self._views = np.empty((0, 3), dtype=np.float64)
        self._n = 0
        self._tree = None

    @classmethod
    def _from_arrays(cls, epsilon, pts, classes, views):
        c = cls(epsilon)
        c._pts = np.ascontiguousarray(pts, dtype=np.float64)
        c._cls = np.asarray(classes, dtype=np.int8).copy()
        c._views = np.ascontiguousarray(views, dtype=np.float64)
        c._n = len(c._pts)
        return c

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    @property
    def classes(self) -> np.ndarray:
        return self._cls[: self._n]

    @property
    def capture_views(self) -> np.ndarray:
        return self._views[: self._n]

    @property
    def tree(self) -> cKDTree | None:
        """KD-tree over the stored points, rebuilt lazily after mutation."""
        if self._n == 0:
            return None
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def class_indices(self, cls: PointClass) -> np.ndarray:
        return np.flatnonzero(self.classes == int(cls))

    def set_class(self, idx, cls: PointClass):
        self._cls[idx] = int(cls)

    def _grow(self, extra: int):
        need = self._n + extra
        if need <= len(self._pts):
            return
        cap = max(1024, len(self._pts))
        while cap < need:
            cap *= 2
        for name in ("_pts", "_views"):
            old = getattr(self, name)
            new = np.empty((cap, 3), dtype=np.float64)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)
        new_cls = np.empty(cap, dtype=np.int8)
        new_cls[: self._n] = self._cls[: self._n]
        self._cls = new_cls

    def insert_filtered(self, new_points, capture_view) -> np.ndarray:
        """Insert points that pass the eps separation filter; returns their indices.

        Each point is compared against everything stored so far, including
        earlier accepts from the same batch, in input order.
        """
        pts = np.asarray(new_points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        cap_pos = capture_view.position if isinstance(capture_view, View) else as_point(capture_view)

        if self._n > 0:
            lo = pts.min(axis=0) - self.epsilon
            hi = pts.max(axis=0) + self.epsilon
            stored = self.points
            near = np.all((stored >= lo) & (stored <= hi), axis=1)
            seeds = np.ascontiguousarray(stored[near])
        else:
            seeds = np.empty((0, 3), dtype=np.float64)

        keep = _eps_greedy(np.ascontiguousarray(pts), seeds, self.epsilon)
        accepted = pts[keep]
        k = len(accepted)
        if k == 0:
            return np.empty(0, dtype=np.int64)
        self._grow(k)
        idx = np.arange(self._n, self._n + k, dtype=np.int64)
        self._pts[self._n : self._n + k] = accepted
        self._cls[self._n : self._n + k] = int(PointClass.OUTLIER)
        self._views[self._n : self._n + k] = cap_pos
        self._n += k
        self._tree = None
        return idx

    # -- spatial queries (closed balls: boundary points at exactly the radius count) --

    def neighbors_within(self, center, radius: float) -> np.ndarray:
        """Indices of stored points with ||q - center|| <= radius, ascending."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        t = self.tree
        if t is None:
            return np.empty(0, dtype=np.int64)
        idx = t.query_ball_point(np.asarray(center, dtype=np.float64), radius)
        return np.sort(np.asarray(idx, dtype=np.int64))

    def count_within(self, center, radius: float) -> int:
        t = self.tree
        if t is None:
            return 0
        return int(t.query_ball_point(np.asarray(center, dtype=np.float64), radius, return_length=True))

    def nearest_dists(self, centers, within: float | None = None) -> np.ndarray:
        """Distance from each query to its nearest stored point (inf if empty).

        `within` bounds the search: beyond it the result is inf. Pass it
        whenever only proximity below a threshold matters; it prunes the
        tree walk substantially on large clouds.
        """
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        t = self.tree
        if t is None:
            return np.full(len(centers), np.inf)
        bound = np.inf if within is None else within
        d, _ = t.query(centers, k=1, distance_upper_bound=bound, workers=-1)
        return np.atleast_1d(d)

    def crop_to_bounds(self, box: Aabb) -> "ObservedCloud":
        """New cloud holding exactly the points inside the closed box."""
        inside = box.contains(self.points)
        return ObservedCloud._from_arrays(
            self.epsilon, self.points[inside], self.classes[inside], self.capture_views[inside]
        )

    # -- persistence --

    def save_ply(self, path):
        """ASCII PLY with class label (0 core / 1 frontier / 2 outlier) and
        the capturing-view position as three extra float properties."""
        n = self._n
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {n}\n")
            for prop in ("x", "y", "z"):
                f.write(f"property float {prop}\n")
            f.write("property uchar class\n")
            for prop in ("view_x", "view_y", "view_z"):
                f.write(f"property float {prop}\n")
            f.write("end_header\n")
            pts, cls, views = self.points, self.classes, self.capture_views
            for i in range(n):
                f.write(
                    "%.9g %.9g %.9g %d %.9g %.9g %.9g\n"
                    % (pts[i, 0], pts[i, 1], pts[i, 2], cls[i], views[i, 0], views[i, 1], views[i, 2])
                )


def load_cloud_ply(path, epsilon: float = 1e-9) -> ObservedCloud:
    """Read a cloud PLY written by save_ply (or any ASCII PLY with x y z
    leading properties; missing class/view columns default to outlier/origin)."""
    with open(path) as f:
        line = f.readline().strip()
        if line != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n = None
        props = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated PLY header")
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY clouds are supported")
            if tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    n = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                props.append(tok[2])
            elif tok[0] == "end_header":
                break
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        rows = np.loadtxt(f, dtype=np.float64, max_rows=n, ndmin=2)
    if rows.shape[0] != n or rows.shape[1] < 3:
        raise ValueError(f"{path}: vertex data does not match header")
    col = {name: i for i, name in enumerate(props)}
    pts = rows[:, [col["x"], col["y"], col["z"]]]
    if "class" in col:
        cls = rows[:, col["class"]].astype(np.int8)
    else:
        cls = np.full(n, int(PointClass.OUTLIER), dtype=np.int8)
    if "view_x" in col:
        views = rows[:, [col["view_x"], col["view_y"], col["view_z"]]]
    else:
        views = np.zeros((n, 3))
    return ObservedCloud._from_arrays(epsilon, pts, cls, views)
