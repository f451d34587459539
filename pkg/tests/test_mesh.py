import struct

import numpy as np
import pytest

from nbvplan.geometry import View, normalize
from nbvplan.mesh import (
    MeshLoadError,
    SceneMesh,
    load_mesh,
    make_box,
    make_icosphere,
    make_rect,
    raycast_brute,
    save_mesh_ply,
)
from nbvplan.params import SensorIntrinsics
from nbvplan.sensor import SimSensor, ray_directions


def slab_box_intersect(origin, direction, lo, hi):
    """Analytic ray/AABB first-hit distance (inf on miss)."""
    t_near, t_far = -np.inf, np.inf
    for a in range(3):
        if abs(direction[a]) < 1e-300:
            if origin[a] < lo[a] or origin[a] > hi[a]:
                return np.inf
            continue
        t1 = (lo[a] - origin[a]) / direction[a]
        t2 = (hi[a] - origin[a]) / direction[a]
        t_near = max(t_near, min(t1, t2))
        t_far = min(t_far, max(t1, t2))
    if t_near > t_far or t_far < 0:
        return np.inf
    return t_near if t_near > 0 else t_far


def sphere_intersect(origin, direction, center, radius):
    oc = origin - center
    b = oc @ direction
    disc = b * b - (oc @ oc - radius * radius)
    if disc < 0:
        return np.inf
    t = -b - np.sqrt(disc)
    return t if t > 0 else np.inf


class TestMeshBasics:
    def test_unit_cube_counts(self):
        m = make_box(size=(1, 1, 1))
        assert len(m.vertices) == 8 and len(m.triangles) == 12

    def test_ply_round_trip(self, tmp_path):
        m = make_box(center=(0.1, -0.2, 0.3), size=(1, 2, 0.5))
        save_mesh_ply(m, tmp_path / "box.ply")
        back = load_mesh(tmp_path / "box.ply")
        assert len(back.vertices) == 8 and len(back.triangles) == 12
        np.testing.assert_allclose(back.vertices, m.vertices, rtol=1e-6)

    def test_obj_loader(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"  # quad fan-triangulates
        )
        m = load_mesh(path)
        assert len(m.vertices) == 4 and len(m.triangles) == 2

    def test_obj_with_slashes(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n")
        m = load_mesh(path)
        assert len(m.triangles) == 1

    def test_binary_ply_loader(self, tmp_path):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype="<f4")
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            "element vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "element face 1\n"
            "property list uchar int vertex_indices\nend_header\n"
        )
        payload = verts.tobytes() + struct.pack("<B3i", 3, 0, 1, 2)
        path = tmp_path / "bin.ply"
        path.write_bytes(header.encode() + payload)
        m = load_mesh(path)
        assert len(m.vertices) == 3 and len(m.triangles) == 1

    def test_scale_to_box_binding_axis(self):
        m = make_box(size=(2.0, 1.0, 4.0)).scaled_to_box((0.8, 0.8, 0.6))
        lo, hi = m.bounds
        dims = hi - lo
        assert dims[2] == pytest.approx(0.6)  # z is the binding axis here
        assert dims[0] == pytest.approx(0.3) and dims[1] == pytest.approx(0.15)
        np.testing.assert_allclose(m.center, 0, atol=1e-12)

    def test_corrupt_file_raises(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text("this is not a mesh\n")
        with pytest.raises(MeshLoadError):
            load_mesh(path)

    def test_degenerate_triangle_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        with pytest.raises(MeshLoadError, match="degenerate"):
            SceneMesh(verts, np.array([[0, 1, 1]]))

    def test_out_of_range_indices_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        with pytest.raises(MeshLoadError, match="out of range"):
            SceneMesh(verts, np.array([[0, 1, 3]]))

    def test_unsupported_extension(self, tmp_path):
        path = tmp_path / "mesh.stl"
        path.write_text("solid\n")
        with pytest.raises(MeshLoadError):
            load_mesh(path)


class TestRaycast:
    def test_box_matches_analytic_slab(self, rng):
        box = make_box(center=(0.2, -0.1, 0.3), size=(0.8, 1.2, 0.5))
        origin = np.array([2.0, 1.5, 1.0])
        targets = rng.uniform([-0.2, -0.7, 0.05], [0.6, 0.5, 0.55], size=(200, 3))
        dirs = np.array([normalize(t - origin) for t in targets])
        got = box.raycast(origin, dirs)
        lo = np.array([-0.2, -0.7, 0.05])
        hi = np.array([0.6, 0.5, 0.55])
        expected = np.array([slab_box_intersect(origin, d, lo, hi) for d in dirs])
        np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_sphere_vertices_match_analytic(self):
        # rays aimed at front-facing vertices of a convex sphere mesh hit at
        # exactly the analytic sphere distance (vertices lie on the sphere)
        radius, center = 0.3, np.zeros(3)
        mesh = make_icosphere(radius, subdivisions=2)
        origin = np.array([1.2, 0.3, 0.2])
        front = mesh.vertices[np.einsum("ij,ij->i", mesh.vertices - origin, mesh.vertices - center) < 0]
        dirs = np.array([normalize(v - origin) for v in front])
        got = mesh.raycast(origin, dirs)
        expected = np.array([sphere_intersect(origin, d, center, radius) for d in dirs])
        np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_bvh_matches_brute_force(self, rng):
        mesh = make_icosphere(0.4, subdivisions=2, center=(0.1, 0.0, -0.2))
        origin = np.array([1.5, -0.5, 0.5])
        dirs = np.array([normalize(v) for v in rng.normal(size=(300, 3))])
        fast = mesh.raycast(origin, dirs)
        slow = raycast_brute(origin, dirs, mesh)
        hit = np.isfinite(slow)
        assert np.array_equal(np.isfinite(fast), hit)
        np.testing.assert_allclose(fast[hit], slow[hit], atol=1e-9)

    def test_miss_returns_inf(self):
        mesh = make_box()
        t = mesh.raycast(np.array([5.0, 0, 0]), np.array([[1.0, 0, 0]]))
        assert np.isinf(t[0])


class TestSensor:
    def intr(self, w=50, h=30, sigma=0.0):
        return SensorIntrinsics(width=w, height=h, fov_x_deg=70, fov_y_deg=43, range_noise_sigma=sigma)

    def test_ray_grid_shape_and_norms(self):
        view = View(position=[0, 0, 0], orientation=[1, 0, 0])
        dirs = ray_directions(view, self.intr())
        assert dirs.shape == (50 * 30, 3)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)

    def test_rays_stay_in_frustum(self):
        view = View(position=[0, 0, 0], orientation=[0, 1, 0])
        dirs = ray_directions(view, self.intr())
        angles = np.degrees(np.arccos(np.clip(dirs @ [0, 1, 0], -1, 1)))
        assert angles.max() <= np.hypot(35, 21.5) + 1e-9

    def test_plane_fills_frustum_exact_hit_count(self):
        intr = self.intr()
        # wall 0.5 m in front of the sensor, much larger than the footprint
        wall = make_rect(center=(0.5, 0, 0), edge_u=(0, 2.5, 0), edge_v=(0, 0, 2.5))
        sensor = SimSensor(intr, seed=0)
        view = View(position=[0, 0, 0], orientation=[1, 0, 0])
        pts = sensor.capture(wall, view)
        assert len(pts) == intr.width * intr.height
        assert np.max(np.abs(pts[:, 0] - 0.5)) < 1e-9  # all on the plane x = 0.5

    def test_view_facing_away_sees_nothing(self):
        wall = make_rect(center=(0.5, 0, 0), edge_u=(0, 2.5, 0), edge_v=(0, 0, 2.5))
        sensor = SimSensor(self.intr(), seed=0)
        view = View(position=[0, 0, 0], orientation=[-1, 0, 0])
        assert len(sensor.capture(wall, view)) == 0

    def test_range_noise_statistics(self):
        sigma = 0.01
        intr = self.intr(w=120, h=90, sigma=sigma)
        wall = make_rect(center=(0.5, 0, 0), edge_u=(0, 2.5, 0), edge_v=(0, 0, 2.5))
        view = View(position=[0, 0, 0], orientation=[1, 0, 0])
        clean = SimSensor(self.intr(w=120, h=90), seed=5).capture(wall, view)
        noisy = SimSensor(intr, seed=5).capture(wall, view)
        residual = np.linalg.norm(noisy, axis=1) - np.linalg.norm(clean, axis=1)
        n = len(residual)
        assert abs(residual.mean()) < 3 * sigma / np.sqrt(n)
        assert residual.std() == pytest.approx(sigma, rel=0.05)

    def test_capture_deterministic_per_seed(self):
        intr = self.intr(sigma=0.01)
        wall = make_rect(center=(0.5, 0, 0), edge_u=(0, 2.5, 0), edge_v=(0, 0, 2.5))
        view = View(position=[0, 0, 0], orientation=[1, 0, 0])
        a = SimSensor(intr, seed=9).capture(wall, view)
        b = SimSensor(intr, seed=9).capture(wall, view)
        np.testing.assert_array_equal(a, b)
        c = SimSensor(intr, seed=10).capture(wall, view)
        assert not np.array_equal(a, c)
