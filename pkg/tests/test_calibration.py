import numpy as np
import pytest

from cpscan.calibration import (
    PlanarView,
    calibrate_intrinsics,
    camera_to_board,
    pose_from_homography,
    projector_view_from_camera,
    stereo_extrinsics,
)
from cpscan.decode import CorrespondenceMap
from cpscan.errors import DegenerateConfigurationError
from cpscan.fixtures import REFERENCE_CAMERA, REFERENCE_PROJECTOR
from cpscan.geometry import Homography, Pose, StereoRig, project, rotation_from_axis_angle
from cpscan.metrology import fit_plane
from cpscan.pipeline import triangulate_correspondence
from cpscan.simulator import (
    Board,
    SceneSpec,
    _rot,
    default_calibration_boards,
    synthesize_calibration_view,
    trace_scene,
    ground_truth,
)


def board_grid(nx=8, ny=6, step=0.05):
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    return np.column_stack([i.ravel(), j.ravel()]) * step


def homography_of(model, pose):
    K = model.K
    return Homography(K @ np.column_stack([pose.rotation[:, 0], pose.rotation[:, 1], pose.translation]))


@pytest.fixture(scope="module")
def views_data(ideal_rig):
    return [synthesize_calibration_view(ideal_rig, b) for b in default_calibration_boards(ideal_rig)]


def rel_err(model, truth):
    return max(abs(getattr(model, k) / getattr(truth, k) - 1) for k in ("fx", "fy", "cx", "cy"))


class TestPoseFromHomography:
    def test_identity_at_one_meter(self):
        pose = Pose(np.eye(3), [0, 0, 1.0])
        got = pose_from_homography(REFERENCE_CAMERA.K, homography_of(REFERENCE_CAMERA, pose))
        np.testing.assert_allclose(got.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(got.translation, [0, 0, 1], atol=1e-9)

    def test_scale_invariance(self):
        pose = Pose(rotation_from_axis_angle([0.2, -0.1, 0.05]), [0.1, -0.2, 2.0])
        H = homography_of(REFERENCE_CAMERA, pose)
        a = pose_from_homography(REFERENCE_CAMERA, H)
        b = pose_from_homography(REFERENCE_CAMERA, H.matrix * 7)
        c = pose_from_homography(REFERENCE_CAMERA, H.matrix * -3)
        for other in (b, c):
            np.testing.assert_allclose(other.rotation, a.rotation, atol=1e-12)
            np.testing.assert_allclose(other.translation, a.translation, atol=1e-12)

    def test_tilted_board_reprojects(self):
        pose = Pose(_rot("x", 30.0), [-0.2, -0.1, 2.0])
        bxy = board_grid()
        pts = np.column_stack([bxy, np.zeros(len(bxy))])
        cam = REFERENCE_CAMERA.without_distortion()
        px = project(cam, pose, pts)
        from cpscan.geometry import estimate_homography_dlt

        got = pose_from_homography(cam, estimate_homography_dlt(bxy, px))
        assert np.abs(project(cam, got, pts) - px).max() < 1e-8
        assert np.abs(got.rotation.T @ got.rotation - np.eye(3)).max() < 1e-10


class TestIntrinsics:
    def test_camera_recovery(self, views_data):
        res = calibrate_intrinsics([v.camera_view for v in views_data], (1600, 1200))
        assert rel_err(res.model, REFERENCE_CAMERA) < 1e-6
        assert max(res.rms) < 1e-8
        assert res.model.k1 == 0 and res.model.k2 == 0

    def test_projector_oracle_views(self, views_data):
        res = calibrate_intrinsics([v.projector_view_true for v in views_data], (1024, 768))
        assert rel_err(res.model, REFERENCE_PROJECTOR) < 1e-6

    def test_projector_inverse_camera(self, views_data):
        cam_model = REFERENCE_CAMERA.without_distortion()
        pviews = []
        for v in views_data:
            H = camera_to_board(v.camera_view, cam_model)
            pviews.append(projector_view_from_camera(H, v.projected_cam_pixels, v.projector_pixels))
        res = calibrate_intrinsics(pviews, (1024, 768))
        assert rel_err(res.model, REFERENCE_PROJECTOR) < 5e-4
        assert max(res.rms) < 1e-8

    def test_two_views_rejected(self, views_data):
        with pytest.raises(ValueError, match="at least 3"):
            calibrate_intrinsics([v.camera_view for v in views_data[:2]], (1600, 1200))

    def test_fronto_parallel_degenerate(self):
        bxy = board_grid()
        pts = np.column_stack([bxy, np.zeros(len(bxy))])
        cam = REFERENCE_CAMERA.without_distortion()
        views = [PlanarView(bxy, project(cam, Pose(np.eye(3), [dx, -0.1, z]), pts)) for dx, z in ((-0.2, 1.5), (0.0, 2.0), (0.1, 2.5))]
        with pytest.raises(DegenerateConfigurationError):
            calibrate_intrinsics(views, (1600, 1200))

    def test_planar_view_validation(self):
        with pytest.raises(ValueError):
            PlanarView([[0, 0], [1, 0], [2, 0], [3, 0]], np.zeros((4, 2)))
        with pytest.raises(ValueError):
            PlanarView([[0, 0], [1, 0], [0, 1]], np.zeros((3, 2)))


class TestProjectorView:
    def test_identity_homography(self):
        grid = board_grid(3, 3, 1.0)
        v = projector_view_from_camera(Homography(np.eye(3)), grid, grid + 100)
        np.testing.assert_allclose(v.board_points, grid)
        np.testing.assert_allclose(v.pixels, grid + 100)

    def test_off_board_dropped(self):
        grid = board_grid(3, 3, 1.0)
        cam = np.vstack([grid, [[10.0, 10.0]]])
        proj = np.vstack([grid, [[0.0, 0.0]]])
        with pytest.warns(UserWarning, match="1 projected corner"):
            v = projector_view_from_camera(Homography(np.eye(3)), cam, proj, board_bounds=((0, 0), (2, 2)))
        assert v.dropped == 1 and len(v.pixels) == 9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            projector_view_from_camera(Homography(np.eye(3)), np.zeros((5, 2)), np.zeros((4, 2)))


class TestStereo:
    def test_identical_pose(self):
        bxy = board_grid()
        pose = Pose(_rot("y", 20.0), [-0.2, -0.1, 2.0])
        pts = np.column_stack([bxy, np.zeros(len(bxy))])
        cam = REFERENCE_CAMERA.without_distortion()
        v = PlanarView(bxy, project(cam, pose, pts))
        rel = stereo_extrinsics(v, cam, v, cam)
        np.testing.assert_allclose(rel.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(rel.translation, 0, atol=1e-9)

    def test_recovers_baseline(self, ideal_rig, views_data):
        v = views_data[0]
        H = camera_to_board(v.camera_view, ideal_rig.camera)
        pv = projector_view_from_camera(H, v.projected_cam_pixels, v.projector_pixels)
        rel = stereo_extrinsics(v.camera_view, ideal_rig.camera, pv, ideal_rig.projector)
        assert abs(np.linalg.norm(rel.translation) - 0.25) < 1e-6
        # two-path check on board points
        board_world = v.board.to_world(pv.board_points)
        via_proj = rel.apply(ideal_rig.projector_pose.apply(board_world))
        assert np.abs(via_proj - board_world).max() < 1e-9

    def test_distorted_camera(self, rig):
        board = default_calibration_boards(rig)[2]
        v = synthesize_calibration_view(rig, board)
        H = camera_to_board(v.camera_view, rig.camera)
        pv = projector_view_from_camera(H, v.projected_cam_pixels, v.projector_pixels)
        np.testing.assert_allclose(pv.board_points, v.projector_view_true.board_points, atol=1e-9)
        rel = stereo_extrinsics(v.camera_view, rig.camera, pv, rig.projector)
        np.testing.assert_allclose(rel.translation, rig.projector_to_camera.translation, atol=1e-9)

    def test_plane_with_recovered_extrinsics(self, ideal_rig, views_data):
        # exact correspondences isolate calibration error from decoding error
        v = views_data[4]
        H = camera_to_board(v.camera_view, ideal_rig.camera)
        pv = projector_view_from_camera(H, v.projected_cam_pixels, v.projector_pixels)
        est = StereoRig(ideal_rig.camera, ideal_rig.projector, stereo_extrinsics(v.camera_view, ideal_rig.camera, pv, ideal_rig.projector))
        board = Board.facing([0, -0.3, 2.2], _rot("y", 8.0), squares_x=12, squares_y=8, square_size=0.06)
        scene = SceneSpec(board)
        gt = ground_truth(ideal_rig, scene, trace_scene(ideal_rig, scene))
        valid = gt.valid
        corr = CorrespondenceMap(np.where(valid, gt.xp, np.nan), np.where(valid, gt.yp, np.nan), valid, 64, 96)
        recon = triangulate_correspondence(est, corr)
        _, _, rms = fit_plane(recon.points[recon.valid])
        assert recon.valid.sum() > 10000
        assert rms < 1e-4
