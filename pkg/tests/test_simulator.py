import numpy as np
import pytest

from cpscan.decode import DecodeOptions, decode_stack, wrapped_phase
from cpscan.geometry import Ray, project
from cpscan.patterns import PatternSpec, full_pattern_stack
from cpscan.simulator import (
    Board,
    RenderOptions,
    SceneSpec,
    Sphere,
    frame_noise,
    intersect_scene,
    render_capture,
    render_scan,
    sample_bilinear,
    trace_scene,
)

from conftest import make_small_scene

FACING = Board.facing([0.0, 0.0, 2.2], squares_x=10, squares_y=10, square_size=0.1)


@pytest.fixture(scope="module")
def flat_scene():
    board = Board.facing([0, 0, 1.0], squares_x=8, squares_y=6, square_size=0.05, albedo_light=0.9, albedo_dark=0.9)
    return make_small_scene().replace(board=board)


@pytest.fixture(scope="module")
def shadow_scan(small_rig, small_stack):
    scene = make_small_scene(spheres=(Sphere([0.04, 0.0, 0.8], 0.05, 0.8),))
    caps, gt = render_scan(small_rig, scene, small_stack)
    return scene, caps, gt, trace_scene(small_rig, scene)


class TestIntersect:
    def test_board_hit(self):
        hit = intersect_scene(Ray(np.zeros(3), np.array([0, 0, 1.0])), SceneSpec(FACING))
        np.testing.assert_allclose(hit.point, [0, 0, 2.2], atol=1e-12)
        np.testing.assert_allclose(hit.normal, [0, 0, -1], atol=1e-12)

    def test_miss(self):
        assert intersect_scene(Ray(np.zeros(3), np.array([0, 1.0, 0])), SceneSpec(FACING)) is None

    def test_sphere_hit(self):
        scene = SceneSpec(Board.facing([0, 0, 50.0]), (Sphere([0, 0, 5.0], 1.0, 0.7),))
        hit = intersect_scene(Ray(np.zeros(3), np.array([0, 0, 1.0])), scene)
        np.testing.assert_allclose(hit.point, [0, 0, 4.0], atol=1e-12)
        np.testing.assert_allclose(hit.normal, [0, 0, -1], atol=1e-12)
        assert hit.albedo == 0.7

    def test_checker_albedo(self):
        b = Board(np.array([-0.5, -0.5, 2.0]), [1, 0, 0], [0, 1, 0], 4, 4, 0.25, 0.9, 0.3)
        scene = SceneSpec(b)
        for (x, y), a in (((-0.4, -0.4), 0.9), ((-0.1, -0.4), 0.3), ((-0.1, -0.1), 0.9)):
            d = np.array([x, y, 2.0])
            assert intersect_scene(Ray(np.zeros(3), d / np.linalg.norm(d)), scene).albedo == a

    def test_board_axes_validated(self):
        with pytest.raises(ValueError):
            Board(np.zeros(3), [1, 0, 0], [1, 0, 0])


class TestRender:
    def test_full_white(self, small_rig, flat_scene):
        img = render_capture(small_rig, flat_scene, np.full((192, 256), 255, np.uint8))
        lit = trace_scene(small_rig, flat_scene).lit
        assert lit.sum() > 1000
        assert np.all(img[lit] == 217)
        assert np.all(img[~lit] == 10)

    def test_all_black(self, small_rig, flat_scene):
        img = render_capture(small_rig, flat_scene, np.zeros((192, 256), np.uint8))
        assert np.all(img == 10)

    def test_noise_deterministic(self, small_rig, flat_scene):
        noisy = flat_scene.replace(noise_sigma=3.0, seed=7)
        pat = np.full((192, 256), 128, np.uint8)
        a = render_capture(small_rig, noisy, pat)
        b = render_capture(small_rig, noisy, pat)
        c = render_capture(small_rig, noisy, pat, RenderOptions(seed=8))
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_noise_streams(self):
        a = frame_noise(1, 0, (4, 6), 1.0)
        assert np.array_equal(a[2], frame_noise(1, 0, (9, 6), 1.0)[2])  # rows independent of image height
        assert not np.array_equal(a, frame_noise(1, 1, (4, 6), 1.0))
        assert np.all(frame_noise(1, 0, (2, 2), 0.0) == 0)

    def test_pattern_shape_checked(self, small_rig, flat_scene):
        with pytest.raises(ValueError):
            render_capture(small_rig, flat_scene, np.zeros((10, 10), np.uint8))

    def test_bilinear(self):
        img = np.array([[0.0, 10.0], [20.0, 30.0]])
        assert sample_bilinear(img, np.array([0.5, 0.5])) == 15.0
        assert sample_bilinear(img, np.array([1.0, 0.0])) == 10.0
        assert sample_bilinear(img, np.array([-3.0, 0.0])) == 0.0

    def test_phase_albedo_invariant(self, small_rig):
        spec = PatternSpec(256, 192, 16)
        stack = full_pattern_stack(spec, None)
        light, dark = (make_small_scene().replace(board=Board.facing([0, 0, 1.0], squares_x=8, squares_y=6, square_size=0.05, albedo_light=a, albedo_dark=a)) for a in (0.95, 0.55))
        phis = []
        for scene in (light, dark):
            caps, gt = render_scan(small_rig, scene, stack)
            phis.append(wrapped_phase(*caps[:3]))
        v = gt.valid
        diff = np.angle(np.exp(1j * (phis[0][v] - phis[1][v])))
        # only 8-bit rounding separates the two
        assert np.abs(diff).max() < 0.05
        true = np.angle(np.exp(1j * 2 * np.pi * gt.xp[v] / 16))
        assert np.abs(np.angle(np.exp(1j * (phis[0][v] - true)))).max() < 0.05


class TestGroundTruth:
    def test_correspondence_is_projection(self, small_rig, small_scan):
        gt = small_scan.truth
        v = np.argwhere(gt.valid)[::997]
        P = gt.points[v[:, 0], v[:, 1]]
        uv = project(small_rig.projector, small_rig.projector_pose, P)
        np.testing.assert_allclose(uv[:, 0], gt.xp[v[:, 0], v[:, 1]], atol=1e-9)
        np.testing.assert_allclose(uv[:, 1], gt.yp[v[:, 0], v[:, 1]], atol=1e-9)

    def test_corner_distance(self, rig):
        from cpscan.fixtures import metrology_scene
        from cpscan.simulator import corner_truth

        board = metrology_scene().board
        ids, world, _ = corner_truth(rig, board)
        a = np.nonzero((ids == [2, 2]).all(axis=1))[0][0]
        b = np.nonzero((ids == [5, 2]).all(axis=1))[0][0]
        assert abs(np.linalg.norm(world[a] - world[b]) - 0.18) < 1e-12

    def test_depth(self, small_scan):
        d = small_scan.truth.depth
        assert np.nanmin(d) > 0.8 and np.nanmax(d) < 1.2

    def test_render_deterministic(self, small_rig, small_stack):
        scene = make_small_scene(noise_sigma=2.0, seed=3)
        a, _ = render_scan(small_rig, scene, small_stack)
        b, _ = render_scan(small_rig, scene, small_stack)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestShadows:
    def test_shadow_pixels_ambient(self, shadow_scan):
        scene, caps, gt, trace = shadow_scan
        shadow = trace.hit & ~trace.lit
        cam_inside = np.zeros_like(shadow)
        cam_inside[100:200, 120:280] = True
        shadow &= cam_inside
        assert shadow.sum() > 50
        for img in caps:
            assert np.all(img[shadow] == scene.ambient)

    def test_shadow_masked_by_decoder(self, shadow_scan, small_stack):
        _, caps, _, trace = shadow_scan
        res = decode_stack(caps, small_stack.manifest, DecodeOptions())
        assert not np.any(res.correspondence.valid & ~trace.lit)

    def test_shadows_off(self, small_rig):
        scene = make_small_scene(spheres=(Sphere([0.04, 0.0, 0.8], 0.05, 0.8),), shadows=False)
        t = trace_scene(small_rig, scene)
        assert np.array_equal(t.lit, np.isfinite(t.proj_uv[..., 0]))
        on = trace_scene(small_rig, scene.replace(shadows=True))
        assert t.lit.sum() > on.lit.sum()
