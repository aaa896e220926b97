import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_box_part
from regrasp.errors import DegenerateGeometryError, InputError
from regrasp.geometry import (
    ConvexPart,
    ObjectModel,
    RigidTransform,
    clearance_penalty,
    closest_surface_point,
    convex_hull,
    matrix_to_quat,
    quat_to_matrix,
    signed_distance_object,
    signed_distance_part,
    signed_distances_object,
    signed_distances_part,
)

UNIT_CUBE = make_box_part((0, 0, 0), (0.5, 0.5, 0.5))
IDENT = RigidTransform.identity()


def brute_force_signed_distance(points, part, n_samples=100_000, rng=None):
    """Dense surface sampling oracle: distance from nearest surface sample,
    sign from the face-plane containment test."""
    from scipy.spatial import cKDTree

    rng = rng or np.random.default_rng(0)
    tri = part.triangles
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    counts = np.maximum(1, np.round(n_samples * areas / areas.sum()).astype(int))
    samples = []
    for t in range(len(tri)):
        u = rng.random((counts[t], 2))
        flip = u.sum(axis=1) > 1
        u[flip] = 1 - u[flip]
        samples.append(tri[t, 0] + u[:, :1] * (tri[t, 1] - tri[t, 0]) + u[:, 1:] * (tri[t, 2] - tri[t, 0]))
    surf = np.vstack(samples)
    dist, _ = cKDTree(surf).query(np.atleast_2d(points))
    inside = (np.atleast_2d(points) @ part.normals.T - part.offsets).max(axis=1) <= 0
    return np.where(inside, -dist, dist)


class TestSignedDistancePart:
    def test_cube_center(self):
        assert signed_distance_part(np.zeros(3), UNIT_CUBE) == pytest.approx(-0.5, abs=1e-9)

    def test_cube_outside_axis(self):
        assert signed_distance_part(np.array([1.0, 0, 0]), UNIT_CUBE) == pytest.approx(0.5, abs=1e-9)

    def test_cube_on_surface(self):
        assert signed_distance_part(np.array([0.5, 0, 0]), UNIT_CUBE) == pytest.approx(0.0, abs=1e-9)

    def test_cube_corner_region(self):
        (d,) = [signed_distance_part(np.array([1.0, 1.0, 1.0]), UNIT_CUBE)]
        assert d == pytest.approx(np.sqrt(3) * 0.5, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            pts = rng.normal(scale=0.02, size=(12, 3))
            part = convex_hull(pts)
            queries = rng.normal(scale=0.03, size=(400, 3))
            got = signed_distances_part(queries, part)
            want = brute_force_signed_distance(queries, part, rng=rng)
            assert np.max(np.abs(got - want)) < 1e-3

    def test_far_band_lower_bound(self):
        rng = np.random.default_rng(3)
        queries = rng.normal(scale=0.8, size=(200, 3))
        exact = signed_distances_part(queries, UNIT_CUBE)
        banded = signed_distances_part(queries, UNIT_CUBE, far_band=0.1)
        assert np.all(banded <= exact + 1e-12)
        near = np.abs(exact) < 0.1
        assert np.allclose(banded[near], exact[near])


class TestSignedDistanceObject:
    def test_single_part_passthrough(self):
        obj = ObjectModel((UNIT_CUBE,))
        p = np.array([0.3, -0.1, 0.2])
        assert signed_distance_object(p, obj, IDENT) == signed_distance_part(p, UNIT_CUBE)

    def test_disjoint_parts_take_nearest(self):
        obj = ObjectModel((UNIT_CUBE, make_box_part((3, 0, 0), (0.5, 0.5, 0.5))))
        assert signed_distance_object(np.array([1.25, 0, 0]), obj, IDENT) == pytest.approx(0.75, abs=1e-9)

    def test_overlapping_parts_take_min(self):
        # p=(0.25,0,0) sits inside both unit cubes (centers 0 and 0.5 apart);
        # analytic per-part values are both -0.25
        obj = ObjectModel((UNIT_CUBE, make_box_part((0.5, 0, 0), (0.5, 0.5, 0.5))))
        p = np.array([0.25, 0.0, 0.0])
        assert signed_distance_part(p, obj.parts[0]) == pytest.approx(-0.25, abs=1e-9)
        assert signed_distance_part(p, obj.parts[1]) == pytest.approx(-0.25, abs=1e-9)
        assert signed_distance_object(p, obj, IDENT) == pytest.approx(-0.25, abs=1e-9)

    def test_min_composition_bound(self):
        rng = np.random.default_rng(5)
        obj = ObjectModel((UNIT_CUBE, make_box_part((0.3, 0.2, 0), (0.4, 0.3, 0.6))))
        pts = rng.normal(scale=0.7, size=(100, 3))
        sd = signed_distances_object(pts, obj, IDENT)
        for part in obj.parts:
            assert np.all(sd <= signed_distances_part(pts, part) + 1e-12)

    def test_pose_transforms_query(self):
        obj = ObjectModel((UNIT_CUBE,))
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, 1.0]))
        assert signed_distance_object(np.array([0.0, 0.0, 1.0]), obj, pose) == pytest.approx(-0.5)

    def test_closest_surface_point(self):
        obj = ObjectModel((UNIT_CUBE,))
        rng = np.random.default_rng(11)
        for p in rng.normal(scale=0.6, size=(50, 3)):
            q = closest_surface_point(p, obj, IDENT)
            assert abs(signed_distance_object(q, obj, IDENT)) < 1e-9
            assert np.linalg.norm(p - q) == pytest.approx(abs(signed_distance_object(p, obj, IDENT)), abs=1e-9)


class TestConvexHull:
    def test_tetrahedron(self):
        part = convex_hull(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]]))
        assert len(part.faces) == 4
        assert len(part.vertices) == 4

    def test_interior_point_discarded(self):
        pts = np.array([[sx, sy, sz] for sx in (0, 1) for sy in (0, 1) for sz in (0, 1)], dtype=float)
        part = convex_hull(np.vstack([pts, [[0.5, 0.5, 0.5]]]))
        assert len(part.vertices) == 8
        assert part.volume() == pytest.approx(1.0, abs=1e-12)

    def test_coplanar_input_raises(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.3, 0.2, 0.0]])
        with pytest.raises(DegenerateGeometryError):
            convex_hull(pts)

    def test_too_few_points_raises(self):
        with pytest.raises(InputError):
            convex_hull(np.zeros((3, 3)))

    def test_contains_all_inputs(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pts = rng.normal(size=(rng.integers(4, 40), 3))
            try:
                part = convex_hull(pts)
            except DegenerateGeometryError:
                continue
            slack = (pts @ part.normals.T - part.offsets).max()
            assert slack <= 1e-9

    def test_output_is_valid_part(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(30, 3))
        part = convex_hull(pts)
        # reconstructing re-runs all ConvexPart invariant checks
        ConvexPart(part.vertices.copy(), part.faces.copy())


class TestConvexPartValidation:
    def test_nonconvex_rejected(self):
        verts = UNIT_CUBE.vertices.copy()
        faces = UNIT_CUBE.faces.copy()
        verts = np.vstack([verts, [[0.0, 0.0, 2.0]]])  # spike above, unreferenced
        with pytest.raises(InputError):
            ConvexPart(verts, faces)  # vertex in front of the top face plane

    def test_bad_winding_rejected(self):
        faces = UNIT_CUBE.faces.copy()
        faces[0] = faces[0][[0, 2, 1]]
        with pytest.raises(InputError):
            ConvexPart(UNIT_CUBE.vertices.copy(), faces)

    def test_open_mesh_rejected(self):
        with pytest.raises(InputError):
            ConvexPart(UNIT_CUBE.vertices.copy(), UNIT_CUBE.faces[:-1].copy())

    def test_coplanar_vertices_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
        faces = np.array([[0, 1, 2], [1, 3, 2], [0, 2, 1], [1, 2, 3]])
        with pytest.raises((DegenerateGeometryError, InputError)):
            ConvexPart(verts, faces)


class TestClearancePenalty:
    def test_at_clearance(self):
        assert clearance_penalty(0.001, 0.001) == 0.0

    def test_touching(self):
        assert clearance_penalty(0.0, 0.001) == pytest.approx(0.001)

    def test_penetration_adds_linearly(self):
        assert clearance_penalty(-0.002, 0.001) == pytest.approx(0.003)

    @given(
        st.floats(-0.05, 0.05, allow_nan=False),
        st.floats(-0.05, 0.05, allow_nan=False),
        st.floats(1e-5, 0.01, allow_nan=False),
    )
    def test_nonnegative_zero_iff_clear_and_lipschitz(self, sd1, sd2, beta):
        p1 = clearance_penalty(sd1, beta)
        p2 = clearance_penalty(sd2, beta)
        assert p1 >= 0.0
        assert (p1 == 0.0) == (sd1 >= beta)
        assert abs(p1 - p2) <= abs(sd1 - sd2) + 1e-15

    def test_beta_must_be_positive(self):
        with pytest.raises(InputError):
            clearance_penalty(0.0, 0.0)


class TestRigidTransform:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(InputError):
            RigidTransform(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(InputError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_compose_inverse_roundtrip(self):
        rng = np.random.default_rng(4)
        q = rng.normal(size=4)
        t = RigidTransform.from_quat(rng.normal(size=3), q)
        p = rng.normal(size=(10, 3))
        assert np.allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)

    def test_quat_matrix_roundtrip(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            if q[0] < 0:
                q = -q
            assert np.allclose(matrix_to_quat(quat_to_matrix(q)), q, atol=1e-12)
