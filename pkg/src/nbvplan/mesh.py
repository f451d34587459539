"""Triangle-mesh scenes: PLY/OBJ loading, procedural test shapes, and
BVH-accelerated closest-hit raycasting (numba kernel, numpy brute-force
reference)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

_LEAF_SIZE = 4
_EDGE_EPS = 1e-9
_T_MIN = 1e-9


class MeshLoadError(ValueError):
    pass


@dataclass
class SceneMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    _bvh: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshLoadError(f"vertices must be (V, 3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshLoadError(f"triangles must be (T, 3), got {self.triangles.shape}")
        if len(self.triangles) == 0:
            raise MeshLoadError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshLoadError(
                f"triangle indices out of range [0, {len(self.vertices)}): "
                f"min {self.triangles.min()}, max {self.triangles.max()}"
            )
        areas = self.triangle_areas()
        bad = int(np.sum(areas <= 0.0))
        if bad:
            raise MeshLoadError(f"mesh has {bad} degenerate (zero-area) triangles")

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounds
        return 0.5 * (lo + hi)

    @property
    def bounding_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices - self.center, axis=1)))

    def scaled_to_box(self, extents) -> "SceneMesh":
        """Uniformly scale and recentre so the mesh fits the given box; the
        binding axis matches its box extent exactly."""
        extents = np.asarray(extents, dtype=np.float64)
        if np.any(extents <= 0):
            raise MeshLoadError(f"target box must be positive, got {extents}")
        lo, hi = self.bounds
        dims = hi - lo
        if np.any(dims <= 0):
            raise MeshLoadError("mesh is flat along an axis; cannot scale to a box")
        s = float(np.min(extents / dims))
        verts = (self.vertices - self.center) * s
        return SceneMesh(verts, self.triangles.copy())

    @property
    def bvh(self):
        if self._bvh is None:
            self._bvh = _build_bvh(self.vertices, self.triangles)
        return self._bvh

    def raycast(self, origin, directions) -> np.ndarray:
        """Closest-hit distances per ray; inf where the ray misses."""
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        directions = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        bbmin, bbmax, left, right, start, count, p0, e1, e2 = self.bvh
        return _raycast_kernel(origin, directions, bbmin, bbmax, left, right, start, count, p0, e1, e2)


# ---------------------------------------------------------------------------
# BVH construction (numpy) and traversal (numba)
# ---------------------------------------------------------------------------


def _build_bvh(verts, tris):
    corners = verts[tris]  # (T, 3, 3)
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    centroids = corners.mean(axis=1)
    n = len(tris)

    order = np.arange(n)
    bbmin, bbmax = [], []
    left, right, start, count = [], [], [], []

    def new_node():
        bbmin.append(None)
        bbmax.append(None)
        left.append(-1)
        right.append(-1)
        start.append(-1)
        count.append(0)
        return len(left) - 1

    stack = [(new_node(), 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        idx = order[lo:hi]
        bbmin[node] = tri_lo[idx].min(axis=0)
        bbmax[node] = tri_hi[idx].max(axis=0)
        if hi - lo <= _LEAF_SIZE:
            start[node] = lo
            count[node] = hi - lo
            continue
        cent = centroids[idx]
        axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
        local = np.argsort(cent[:, axis], kind="stable")
        order[lo:hi] = idx[local]
        mid = lo + (hi - lo) // 2
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], lo, mid))
        stack.append((right[node], mid, hi))

    ordered = verts[tris[order]]
    p0 = np.ascontiguousarray(ordered[:, 0])
    e1 = np.ascontiguousarray(ordered[:, 1] - ordered[:, 0])
    e2 = np.ascontiguousarray(ordered[:, 2] - ordered[:, 0])
    return (
        np.ascontiguousarray(bbmin, dtype=np.float64),
        np.ascontiguousarray(bbmax, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(count, dtype=np.int64),
        p0,
        e1,
        e2,
    )


@njit(cache=True, parallel=True, error_model="numpy")
def _raycast_kernel(origin, dirs, bbmin, bbmax, left, right, start, count, p0, e1, e2):
    n = dirs.shape[0]
    out = np.full(n, np.inf)
    ox, oy, oz = origin[0], origin[1], origin[2]
    for ray in prange(n):
        dx, dy, dz = dirs[ray, 0], dirs[ray, 1], dirs[ray, 2]
        ix = 1.0 / dx if abs(dx) > 1e-300 else 1e300
        iy = 1.0 / dy if abs(dy) > 1e-300 else 1e300
        iz = 1.0 / dz if abs(dz) > 1e-300 else 1e300
        best = np.inf
        stack = np.empty(128, dtype=np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            t1 = (bbmin[node, 0] - ox) * ix
            t2 = (bbmax[node, 0] - ox) * ix
            tn = min(t1, t2)
            tf = max(t1, t2)
            t1 = (bbmin[node, 1] - oy) * iy
            t2 = (bbmax[node, 1] - oy) * iy
            tn = max(tn, min(t1, t2))
            tf = min(tf, max(t1, t2))
            t1 = (bbmin[node, 2] - oz) * iz
            t2 = (bbmax[node, 2] - oz) * iz
            tn = max(tn, min(t1, t2))
            tf = min(tf, max(t1, t2))
            if tn > tf or tf < 0.0 or tn > best:
                continue
            c = count[node]
            if c > 0:
                s = start[node]
                for k in range(s, s + c):
                    # Moller-Trumbore, inclusive edges so shared borders still hit
                    pvx = dy * e2[k, 2] - dz * e2[k, 1]
                    pvy = dz * e2[k, 0] - dx * e2[k, 2]
                    pvz = dx * e2[k, 1] - dy * e2[k, 0]
                    det = e1[k, 0] * pvx + e1[k, 1] * pvy + e1[k, 2] * pvz
                    if abs(det) < 1e-300:
                        continue
                    inv_det = 1.0 / det
                    tvx = ox - p0[k, 0]
                    tvy = oy - p0[k, 1]
                    tvz = oz - p0[k, 2]
                    u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv_det
                    if u < -_EDGE_EPS or u > 1.0 + _EDGE_EPS:
                        continue
                    qvx = tvy * e1[k, 2] - tvz * e1[k, 1]
                    qvy = tvz * e1[k, 0] - tvx * e1[k, 2]
                    qvz = tvx * e1[k, 1] - tvy * e1[k, 0]
                    v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
                    if v < -_EDGE_EPS or u + v > 1.0 + _EDGE_EPS:
                        continue
                    t = (e2[k, 0] * qvx + e2[k, 1] * qvy + e2[k, 2] * qvz) * inv_det
                    if _T_MIN < t < best:
                        best = t
            else:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
        out[ray] = best
    return out


def raycast_brute(origin, directions, mesh: SceneMesh) -> np.ndarray:
    """Reference closest-hit raycast: every ray against every triangle."""
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    corners = mesh.vertices[mesh.triangles]
    p0, e1, e2 = corners[:, 0], corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]
    best = np.full(len(dirs), np.inf)
    for i, d in enumerate(dirs):
        pv = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pv)
        ok = np.abs(det) > 1e-300
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tv = origin - p0
        u = np.einsum("ij,ij->i", tv, pv) * inv_det
        qv = np.cross(tv, e1)
        v = (qv @ d) * inv_det
        t = np.einsum("ij,ij->i", e2, qv) * inv_det
        ok &= (u >= -_EDGE_EPS) & (u <= 1 + _EDGE_EPS) & (v >= -_EDGE_EPS) & (u + v <= 1 + _EDGE_EPS)
        ok &= t > _T_MIN
        if np.any(ok):
            best[i] = t[ok].min()
    return best


# ---------------------------------------------------------------------------
# Procedural test shapes
# ---------------------------------------------------------------------------


def make_box(center=(0, 0, 0), size=(1, 1, 1)) -> SceneMesh:
    c = np.asarray(center, dtype=np.float64)
    h = 0.5 * np.asarray(size, dtype=np.float64)
    signs = np.array(
        [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1], [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
        dtype=np.float64,
    )
    verts = c + signs * h
    tris = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [0, 4, 7], [0, 7, 3],  # -x
        ],
        dtype=np.int64,
    )
    return SceneMesh(verts, tris)


def make_rect(center, edge_u, edge_v) -> SceneMesh:
    """Rectangle (two triangles) spanned by half-edge vectors edge_u/edge_v."""
    c = np.asarray(center, dtype=np.float64)
    u = np.asarray(edge_u, dtype=np.float64)
    v = np.asarray(edge_v, dtype=np.float64)
    verts = np.array([c - u - v, c + u - v, c + u + v, c - u + v])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return SceneMesh(verts, tris)


def make_icosphere(radius: float, subdivisions: int = 3, center=(0, 0, 0)) -> SceneMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    tris = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        vlist = list(verts)
        new_tris = []

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in edge_mid:
                m = vlist[a] + vlist[b]
                m = m / np.linalg.norm(m)
                vlist.append(m)
                edge_mid[key] = len(vlist) - 1
            return edge_mid[key]

        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        tris = np.array(new_tris, dtype=np.int64)
    verts = verts * radius + np.asarray(center, dtype=np.float64)
    return SceneMesh(verts, tris)


# ---------------------------------------------------------------------------
# Mesh file IO
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": ("b", 1), "uchar": ("B", 1), "int8": ("b", 1), "uint8": ("B", 1),
    "short": ("h", 2), "ushort": ("H", 2), "int16": ("h", 2), "uint16": ("H", 2),
    "int": ("i", 4), "uint": ("I", 4), "int32": ("i", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4), "double": ("d", 8), "float64": ("d", 8),
}


def load_mesh(path, scale_box=None) -> SceneMesh:
    """Load an ASCII/binary PLY or OBJ mesh; optionally fit it to a box."""
    path = str(path)
    try:
        if path.lower().endswith(".obj"):
            mesh = _load_obj(path)
        elif path.lower().endswith(".ply"):
            mesh = _load_ply(path)
        else:
            raise MeshLoadError(f"{path}: unsupported mesh format (need .ply or .obj)")
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, MeshLoadError):
            raise
        raise MeshLoadError(f"{path}: failed to parse mesh: {exc}") from exc
    if scale_box is not None:
        mesh = mesh.scaled_to_box(scale_box)
    return mesh


def _load_obj(path) -> SceneMesh:
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise MeshLoadError(f"{path}: no vertices or faces found")
    return SceneMesh(np.array(verts), np.array(faces, dtype=np.int64))


def _load_ply(path) -> SceneMesh:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"ply":
            raise MeshLoadError(f"{path}: not a PLY file")
        fmt = None
        elements = []  # (name, count, [(prop_name, type, list_count_type|None)])
        while True:
            line = f.readline()
            if not line:
                raise MeshLoadError(f"{path}: truncated header")
            tok = line.decode("ascii", "replace").split()
            if not tok or tok[0] == "comment":
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if tok[1] == "list":
                    elements[-1][2].append((tok[4], tok[3], tok[2]))
                else:
                    elements[-1][2].append((tok[2], tok[1], None))
            elif tok[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshLoadError(f"{path}: unsupported PLY format {fmt}")
        data = f.read()

    verts = faces = None
    offset = 0
    text_rows = data.decode("ascii", "replace").split("\n") if fmt == "ascii" else None
    row_at = 0
    for name, n, props in elements:
        if fmt == "ascii":
            rows = [r.split() for r in text_rows[row_at : row_at + n]]
            row_at += n
            if name == "vertex":
                cols = [p[0] for p in props]
                arr = np.array([[float(x) for x in r[: len(props)]] for r in rows])
                verts = arr[:, [cols.index("x"), cols.index("y"), cols.index("z")]]
            elif name == "face":
                faces = []
                for r in rows:
                    cnt = int(r[0])
                    idx = [int(x) for x in r[1 : 1 + cnt]]
                    for k in range(1, cnt - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
        else:
            if name == "vertex":
                if any(p[2] is not None for p in props):
                    raise MeshLoadError(f"{path}: list-typed vertex properties are unsupported")
                fields = [(p[0], "<" + _PLY_TYPES[p[1]][0]) for p in props]
                dt = np.dtype(fields)
                arr = np.frombuffer(data, dtype=dt, count=n, offset=offset)
                offset += dt.itemsize * n
                verts = np.column_stack([arr["x"], arr["y"], arr["z"]]).astype(np.float64)
            else:
                faces_here = []
                for _ in range(n):
                    row_vals = []
                    for pname, ptype, ltype in props:
                        if ltype is not None:
                            cfmt, csize = _PLY_TYPES[ltype]
                            cnt = struct.unpack_from("<" + cfmt, data, offset)[0]
                            offset += csize
                            ifmt, isize = _PLY_TYPES[ptype]
                            vals = struct.unpack_from(f"<{cnt}{ifmt}", data, offset)
                            offset += isize * cnt
                            row_vals.append(list(vals))
                        else:
                            pfmt, psize = _PLY_TYPES[ptype]
                            struct.unpack_from("<" + pfmt, data, offset)
                            offset += psize
                    if name == "face" and row_vals:
                        idx = row_vals[0]
                        for k in range(1, len(idx) - 1):
                            faces_here.append([idx[0], idx[k], idx[k + 1]])
                if name == "face":
                    faces = faces_here
    if verts is None or faces is None or not len(faces):
        raise MeshLoadError(f"{path}: PLY has no vertex/face elements")
    return SceneMesh(np.asarray(verts), np.array(faces, dtype=np.int64))


def save_mesh_ply(mesh: SceneMesh, path):
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(mesh.vertices)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write(f"element face {len(mesh.triangles)}\n")
        f.write("property list uchar int vertex_indices\nend_header\n")
        for v in mesh.vertices:
            f.write("%.9g %.9g %.9g\n" % (v[0], v[1], v[2]))
        for t in mesh.triangles:
            f.write("3 %d %d %d\n" % (t[0], t[1], t[2]))
