import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpscan.errors import ConvergenceError, DegenerateConfigurationError, NumericalError
from cpscan.fixtures import REFERENCE_CAMERA
from cpscan.geometry import (
    Homography,
    Pose,
    Ray,
    SensorModel,
    axis_angle_from_rotation,
    distort_normalized,
    estimate_homography_dlt,
    pixel_to_ray,
    project,
    relative_pose,
    rotation_from_axis_angle,
    symmetric_transfer_error,
    triangulate_midpoint,
    triangulate_rays,
    undistort_normalized,
)

SIMPLE = SensorModel(1024, 768, 1000.0, 1000.0, 512.0, 384.0)


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def random_pose(rng, scale=1.0):
    return Pose(rotation_from_axis_angle(rng.normal(size=3) * 0.5), rng.normal(size=3) * scale)


class TestSensorModel:
    @pytest.mark.parametrize(
        "kw",
        [dict(fx=0.0), dict(fy=-1.0), dict(cx=1024.0), dict(cy=-0.1), dict(width=0), dict(k1=np.nan)],
    )
    def test_invariants(self, kw):
        base = dict(width=1024, height=768, fx=1000.0, fy=1000.0, cx=512.0, cy=384.0)
        base.update(kw)
        with pytest.raises(ValueError):
            SensorModel(**base)

    def test_K_roundtrip(self):
        m = SensorModel.from_K(SIMPLE.K, 1024, 768)
        assert m == SIMPLE


class TestProject:
    def test_on_axis(self):
        np.testing.assert_allclose(project(SIMPLE, Pose(), [0, 0, 2]), [512, 384])

    def test_off_axis(self):
        np.testing.assert_allclose(project(SIMPLE, Pose(), [0.1, 0, 2]), [562, 384])

    def test_reference_principal_point(self):
        np.testing.assert_allclose(project(REFERENCE_CAMERA, Pose(), [0, 0, 1]), [803.9, 590.1])

    def test_behind_sensor(self):
        with pytest.raises(NumericalError):
            project(SIMPLE, Pose(), [0, 0, -1])

    def test_distortion_formula(self):
        m = SensorModel(100, 100, 10.0, 10.0, 50.0, 50.0, k1=0.1, k2=0.01)
        # x = 0.5, r2 = 0.25 -> factor 1 + 0.025 + 0.000625
        np.testing.assert_allclose(project(m, Pose(), [1.0, 0, 2.0]), [50 + 10 * 0.5 * 1.025625, 50])


class TestRays:
    def test_principal_ray(self):
        r = pixel_to_ray(SIMPLE, Pose(), [512, 384])
        np.testing.assert_allclose(r.origin, 0)
        np.testing.assert_allclose(r.direction, [0, 0, 1])

    def test_ray_origin_is_center(self, rng):
        pose = random_pose(rng)
        r = pixel_to_ray(SIMPLE, pose, [100.0, 200.0])
        np.testing.assert_allclose(r.origin, -pose.rotation.T @ pose.translation, atol=1e-12)
        assert abs(np.linalg.norm(r.direction) - 1) < 1e-12

    def test_ray_passes_through_point(self, rng):
        pose = Pose(rotation_from_axis_angle([0.1, -0.2, 0.05]), [0.1, 0.0, 0.3])
        X = np.array([0.2, -0.1, 2.5])
        r = pixel_to_ray(SIMPLE, pose, project(SIMPLE, pose, X))
        v = X - r.origin
        assert np.linalg.norm(v - (v @ r.direction) * r.direction) < 1e-12

    @pytest.mark.parametrize("model", [SIMPLE, REFERENCE_CAMERA])
    def test_roundtrip_grid(self, model):
        pose = Pose(rotation_from_axis_angle([0.02, 0.1, -0.03]), [0.05, -0.02, 0.1])
        u, v = np.meshgrid(np.linspace(0, model.width - 1, 17), np.linspace(0, model.height - 1, 13))
        px = np.stack([u, v], axis=-1).reshape(-1, 2)
        r = pixel_to_ray(model, pose, px)
        pts = r.origin + 2.0 * r.direction
        tol = 1e-9 if model.k1 == 0 else 1e-7
        assert np.abs(project(model, pose, pts) - px).max() < tol


class TestUndistort:
    def test_origin_fixed(self):
        np.testing.assert_array_equal(undistort_normalized(0.3, -0.2, [0.0, 0.0]), [0.0, 0.0])

    def test_identity_without_k(self):
        x = np.array([0.3, -0.4])
        np.testing.assert_array_equal(undistort_normalized(0, 0, x), x)

    def test_reference_example(self):
        xd = distort_normalized(0.07, -0.14, [0.3, 0.2])
        np.testing.assert_allclose(undistort_normalized(0.07, -0.14, xd), [0.3, 0.2], atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 0.5), st.floats(0, 2 * np.pi))
    def test_forward_after_inverse(self, r, ang):
        xd = np.array([r * np.cos(ang), r * np.sin(ang)])
        x = undistort_normalized(0.07, -0.14, xd)
        np.testing.assert_allclose(distort_normalized(0.07, -0.14, x), xd, atol=1e-10)

    def test_divergence(self):
        with pytest.raises(ConvergenceError):
            undistort_normalized(5.0, 5.0, [2.0, 2.0])


class TestRotation:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    def test_axis_angle_roundtrip(self, v):
        v = np.array(v)
        if np.linalg.norm(v) >= np.pi - 1e-3:
            v = v / np.linalg.norm(v) * 3.0
        R = rotation_from_axis_angle(v)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(rotation_from_axis_angle(axis_angle_from_rotation(R)), R, atol=1e-9)

    def test_half_turn(self):
        R = rotation_from_axis_angle([0, np.pi, 0])
        np.testing.assert_allclose(rotation_from_axis_angle(axis_angle_from_rotation(R)), R, atol=1e-9)

    def test_pose_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.1, 1.0, 1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_pose_inverse_compose(self, rng):
        p = random_pose(rng)
        ident = p.compose(p.inverse())
        np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(ident.translation, 0, atol=1e-12)

    def test_pose_is_immutable(self):
        p = Pose()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0


class TestHomography:
    def test_identity(self):
        src = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
        H = estimate_homography_dlt(src, src)
        np.testing.assert_allclose(H.matrix, np.eye(3), atol=1e-12)

    def test_translation(self, rng):
        Ht = Homography([[1, 0, 5], [0, 1, 3], [0, 0, 1]])
        src = rng.uniform(-10, 10, size=(8, 2))
        H = estimate_homography_dlt(src, Ht(src))
        np.testing.assert_allclose(H.matrix, Ht.matrix, atol=1e-10)
        assert symmetric_transfer_error(H, src, Ht(src)).max() < 1e-10

    def test_general(self, rng):
        Ht = Homography([[1.2, 0.1, 30], [-0.05, 0.9, -12], [1e-4, 2e-4, 1]])
        src = rng.uniform(0, 500, size=(20, 2))
        H = estimate_homography_dlt(src, Ht(src))
        assert symmetric_transfer_error(H, src, Ht(src)).max() < 1e-8

    def test_scale_invariance(self, rng):
        Ht = Homography([[1.2, 0.1, 30], [-0.05, 0.9, -12], [1e-4, 2e-4, 1]])
        src = rng.uniform(0, 50, size=(12, 2))
        dst = Ht(src)
        H1 = estimate_homography_dlt(src, dst)
        H10 = estimate_homography_dlt(src * 10, dst * 10)
        probe = rng.uniform(0, 50, size=(5, 2))
        np.testing.assert_allclose(H10(probe * 10) / 10, H1(probe), atol=1e-8)

    @pytest.mark.parametrize(
        "src",
        [
            [[0, 0], [1, 1], [2, 2], [3, 3]],
            [[0, 0], [1, 0], [2, 0], [0, 1]],
            [[0, 0], [1, 0], [2, 0], [3, 0], [4, 0]],
        ],
    )
    def test_degenerate(self, src):
        src = np.asarray(src, float)
        with pytest.raises(DegenerateConfigurationError):
            estimate_homography_dlt(src, src + 1)

    def test_singular_matrix(self):
        with pytest.raises(DegenerateConfigurationError):
            Homography(np.ones((3, 3)))

    def test_normalized_h33(self):
        H = Homography(np.eye(3) * 4)
        assert H.matrix[2, 2] == 1.0


class TestTriangulation:
    def test_exact_intersection(self):
        p, gap = triangulate_midpoint(Ray([0, 0, 0], [0, 0, 1]), Ray([1, 0, 0], unit([-1, 0, 1])))
        np.testing.assert_allclose(p, [0, 0, 1], atol=1e-12)
        assert abs(gap) < 1e-12

    def test_skew_rays(self):
        r1, r2 = Ray(np.zeros(3), np.array([0, 0, 1.0])), Ray(np.array([1, 1, 0.0]), unit([-1, 0, 1]))
        p, gap = triangulate_midpoint(r1, r2)
        np.testing.assert_allclose(p, [0, 0.5, 1], atol=1e-12)
        assert abs(gap - 1.0) < 1e-12

    def test_parallel(self):
        with pytest.raises(DegenerateConfigurationError):
            triangulate_midpoint(Ray([0, 0, 0], [0, 0, 1]), Ray([1, 0, 0], [0, 0, 1]))

    def test_batch_masks_parallel(self):
        o1 = np.zeros((2, 3))
        d1 = np.array([[0, 0, 1.0], [0, 0, 1.0]])
        o2 = np.array([[1, 0, 0.0], [1, 0, 0.0]])
        d2 = np.array([unit([-1, 0, 1]), [0, 0, 1.0]])
        p, g, ok = triangulate_rays(Ray(o1, d1), Ray(o2, d2))
        assert ok.tolist() == [True, False]
        assert np.isnan(p[1]).all() and np.isnan(g[1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetry_exact(self, seed):
        rng = np.random.default_rng(seed)
        r1 = Ray(rng.normal(size=3), unit(rng.normal(size=3)))
        r2 = Ray(rng.normal(size=3), unit(rng.normal(size=3)))
        a = triangulate_rays(r1, r2)
        b = triangulate_rays(r2, r1)
        assert np.array_equal(a[0], b[0], equal_nan=True)
        assert np.array_equal(a[1], b[1], equal_nan=True)


class TestRelativePose:
    def test_same_pose(self, rng):
        p = random_pose(rng)
        rel = relative_pose(p, p)
        np.testing.assert_allclose(rel.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(rel.translation, 0, atol=1e-12)

    def test_two_paths(self, rng):
        pc, pp = Pose(), Pose(np.eye(3), [0.2, 0, 0])
        for _ in range(3):
            rel = relative_pose(pc, pp)
            X = rng.normal(size=(5, 3))
            assert np.abs(rel.apply(pp.apply(X)) - pc.apply(X)).max() < 1e-12
            pc, pp = random_pose(rng), random_pose(rng)

    def test_inverse_composition(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        c = relative_pose(a, b).compose(relative_pose(b, a))
        np.testing.assert_allclose(c.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(c.translation, 0, atol=1e-12)


def test_rig_poses(rig):
    X = np.array([[0.1, -0.2, 2.2]])
    np.testing.assert_allclose(rig.projector_to_camera.apply(rig.projector_pose.apply(X)), X, atol=1e-12)
    assert abs(rig.baseline - 0.25) < 1e-12
