"""Ray-casting projector-camera simulator with analytic ground truth.

Scenes are a planar checkerboard plus optional spheres. Shading is
``ambient + albedo * scale * L`` where ``L = 255 (p / 255) ** gamma`` is
the projector radiance for (bilinearly sampled) pattern value ``p``, with
no cosine term, so the fringe model stays exactly linear at ``gamma = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import Ray, SensorModel, StereoRig, distort_normalized, pixel_to_ray, project
from .metrology import LengthSpec, MeasurementPlan
from .patterns import PatternStack

RADIANCE_SCALE = 230.0 / 255.0
HIT_EPS = 1e-7


@dataclass(frozen=True)
class Board:
    origin: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    squares_x: int = 12
    squares_y: int = 8
    square_size: float = 0.06
    albedo_light: float = 0.9
    albedo_dark: float = 0.35

    def __post_init__(self):
        for name in ("origin", "x_axis", "y_axis"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        x, y = self.x_axis, self.y_axis
        if abs(x @ x - 1) > 1e-9 or abs(y @ y - 1) > 1e-9 or abs(x @ y) > 1e-9:
            raise ValueError("board axes must be orthonormal")
        if self.squares_x < 2 or self.squares_y < 2 or self.square_size <= 0:
            raise ValueError("board needs at least 2x2 squares of positive size")
        for a in (self.albedo_light, self.albedo_dark):
            if not 0 <= a <= 1:
                raise ValueError("albedos must lie in [0, 1]")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.x_axis, self.y_axis)

    @property
    def size(self) -> tuple[float, float]:
        return self.squares_x * self.square_size, self.squares_y * self.square_size

    def to_world(self, bxy) -> np.ndarray:
        bxy = np.asarray(bxy, dtype=float)
        return self.origin + bxy[..., :1] * self.x_axis + bxy[..., 1:2] * self.y_axis

    def inner_corner_ids(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(1, self.squares_x), np.arange(1, self.squares_y))
        return np.column_stack([i.ravel(), j.ravel()])

    def corner_board_xy(self, ids) -> np.ndarray:
        return np.asarray(ids, dtype=float) * self.square_size

    @classmethod
    def facing(cls, center, rotation=np.eye(3), **kwargs) -> "Board":
        """Board centred at ``center`` whose axes are the first two columns of ``rotation``."""
        R = np.asarray(rotation, dtype=float)
        probe = cls(np.zeros(3), R[:, 0], R[:, 1], **kwargs)
        w, h = probe.size
        origin = np.asarray(center, float) - w / 2 * R[:, 0] - h / 2 * R[:, 1]
        return cls(origin, R[:, 0], R[:, 1], **kwargs)


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    albedo: float = 0.8

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(3)
        c.flags.writeable = False
        object.__setattr__(self, "center", c)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if not 0 <= self.albedo <= 1:
            raise ValueError("sphere albedo must lie in [0, 1]")


@dataclass(frozen=True)
class SceneSpec:
    board: Board
    spheres: tuple = ()
    ambient: float = 10.0
    projector_gamma: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0
    shadows: bool = True

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(self.spheres))
        if not 0 <= self.ambient <= 255:
            raise ValueError("ambient must lie in [0, 255]")
        if self.projector_gamma <= 0:
            raise ValueError("projector_gamma must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def replace(self, **changes) -> "SceneSpec":
        from dataclasses import replace

        return replace(self, **changes)


class Hit(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    albedo: float


def _intersect_board(board: Board, o, d):
    n = board.normal
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((board.origin - o) @ n) / denom
    t = np.where(np.abs(denom) > 1e-15, t, np.inf)
    t = np.where(t > HIT_EPS, t, np.inf)
    p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * d
    rel = p - board.origin
    bx, by = rel @ board.x_axis, rel @ board.y_axis
    w, h = board.size
    inside = (bx >= 0) & (bx <= w) & (by >= 0) & (by <= h)
    t = np.where(inside, t, np.inf)
    ix = np.clip(np.floor(bx / board.square_size), 0, board.squares_x - 1)
    iy = np.clip(np.floor(by / board.square_size), 0, board.squares_y - 1)
    albedo = np.where((ix + iy) % 2 == 0, board.albedo_light, board.albedo_dark)
    normal = np.where((d @ n)[..., None] > 0, -n, n) * np.ones_like(p)
    return t, normal, albedo


def _intersect_sphere(s: Sphere, o, d):
    oc = o - s.center
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - s.radius**2
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0, t1 = -b - sq, -b + sq
    t = np.where(t0 > HIT_EPS, t0, np.where(t1 > HIT_EPS, t1, np.inf))
    t = np.where(disc >= 0, t, np.inf)
    p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * d
    normal = (p - s.center) / s.radius
    return t, normal, np.full(t.shape, s.albedo)


def intersect_scene_batch(origins, directions, scene: SceneSpec):
    """Nearest hit along each ray: ``(t, points, normals, albedo)``; ``t = inf`` on a miss."""
    o = np.asarray(origins, dtype=float)
    d = np.asarray(directions, dtype=float)
    o = np.broadcast_to(o, d.shape)
    t, normal, albedo = _intersect_board(scene.board, o, d)
    for sphere in scene.spheres:
        ts, ns, a = _intersect_sphere(sphere, o, d)
        closer = ts < t
        t = np.where(closer, ts, t)
        normal = np.where(closer[..., None], ns, normal)
        albedo = np.where(closer, a, albedo)
    p = o + np.where(np.isfinite(t), t, np.nan)[..., None] * d
    return t, p, normal, albedo


def intersect_scene(ray: Ray, scene: SceneSpec) -> Optional[Hit]:
    t, p, n, a = intersect_scene_batch(np.asarray(ray.origin)[None], np.asarray(ray.direction)[None], scene)
    if not np.isfinite(t[0]):
        return None
    return Hit(p[0], n[0], float(a[0]))


@dataclass
class RenderOptions:
    blur_radius: int = 0  # box blur applied to patterns, emulating stripe-edge softness
    seed: Optional[int] = None  # overrides scene.seed


@dataclass
class SceneTrace:
    """Per-camera-pixel geometry shared by every frame of a scan."""

    hit: np.ndarray
    points: np.ndarray
    albedo: np.ndarray
    proj_uv: np.ndarray
    lit: np.ndarray


def camera_pixel_grid(model: SensorModel) -> np.ndarray:
    v, u = np.mgrid[0 : model.height, 0 : model.width]
    return np.stack([u, v], axis=-1).astype(float)


def trace_scene(rig: StereoRig, scene: SceneSpec) -> SceneTrace:
    cam = rig.camera
    rays = pixel_to_ray(cam, rig.camera_pose, camera_pixel_grid(cam))
    t, points, _, albedo = intersect_scene_batch(rays.origin, rays.direction, scene)
    hit = np.isfinite(t)

    ppose = rig.projector_pose
    Xp = ppose.apply(np.where(hit[..., None], points, 0.0))
    front = hit & (Xp[..., 2] > 0)
    z = np.where(front, Xp[..., 2], 1.0)
    proj = rig.projector
    xy = distort_normalized(proj.k1, proj.k2, Xp[..., :2] / z[..., None])
    uv = xy * np.array([proj.fx, proj.fy]) + np.array([proj.cx, proj.cy])
    inside = (
        front
        & (uv[..., 0] >= -0.5)
        & (uv[..., 0] < proj.width - 0.5)
        & (uv[..., 1] >= -0.5)
        & (uv[..., 1] < proj.height - 0.5)
    )
    lit = inside
    if scene.shadows and scene.spheres:
        center = ppose.center
        idx = np.nonzero(inside)
        P = points[idx]
        to_proj = center - P
        dist = np.linalg.norm(to_proj, axis=-1)
        ts, _, _, _ = intersect_scene_batch(P, to_proj / dist[:, None], scene)
        occluded = ts < dist - 1e-6
        lit = inside.copy()
        lit[idx] = ~occluded
    uv = np.where(lit[..., None], uv, np.nan)
    return SceneTrace(hit, points, np.where(hit, albedo, 0.0), uv, lit)


def _box_blur(img: np.ndarray, r: int) -> np.ndarray:
    if r <= 0:
        return img
    k = 2 * r + 1
    p = np.pad(img, r, mode="edge")
    c = np.cumsum(np.cumsum(np.pad(p, ((1, 0), (1, 0))), axis=0), axis=1)
    return (c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]) / (k * k)


def sample_bilinear(img: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear lookup with pixel centers at integer coordinates (edge-clamped)."""
    h, w = img.shape
    u = np.clip(uv[..., 0], 0, w - 1)
    v = np.clip(uv[..., 1], 0, h - 1)
    u0 = np.minimum(np.floor(u).astype(np.int64), w - 2 if w > 1 else 0)
    v0 = np.minimum(np.floor(v).astype(np.int64), h - 2 if h > 1 else 0)
    fu, fv = u - u0, v - v0
    u1, v1 = np.minimum(u0 + 1, w - 1), np.minimum(v0 + 1, h - 1)
    top = img[v0, u0] * (1 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1 - fu) + img[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def frame_noise(seed: int, frame: int, shape, sigma: float) -> np.ndarray:
    """Gaussian noise with one independent stream per (seed, frame, row)."""
    if sigma == 0:
        return np.zeros(shape)
    out = np.empty(shape)
    for row in range(shape[0]):
        out[row] = np.random.default_rng([seed, frame, row]).normal(0.0, sigma, shape[1])
    return out


def shade(trace: SceneTrace, pattern: np.ndarray, scene: SceneSpec, frame: int = 0, opts: Optional[RenderOptions] = None) -> np.ndarray:
    opts = opts or RenderOptions()
    pat = _box_blur(np.asarray(pattern, dtype=float), opts.blur_radius)
    value = np.zeros(trace.lit.shape)
    idx = np.nonzero(trace.lit)
    value[idx] = sample_bilinear(pat, trace.proj_uv[idx])
    radiance = 255.0 * (value / 255.0) ** scene.projector_gamma
    img = scene.ambient + trace.albedo * RADIANCE_SCALE * radiance * trace.lit
    seed = scene.seed if opts.seed is None else opts.seed
    img = img + frame_noise(seed, frame, img.shape, scene.noise_sigma)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def render_capture(rig: StereoRig, scene: SceneSpec, pattern, opts: Optional[RenderOptions] = None, frame: int = 0) -> np.ndarray:
    """Render what the camera records while the projector shows ``pattern``."""
    pattern = np.asarray(pattern)
    if pattern.shape != (rig.projector.height, rig.projector.width):
        raise ValueError(f"pattern shape {pattern.shape} does not match the projector")
    return shade(trace_scene(rig, scene), pattern, scene, frame, opts)


@dataclass
class GroundTruth:
    depth: np.ndarray  # camera-frame z (m), NaN where nothing is hit
    xp: np.ndarray  # exact projector coordinates, NaN where not lit
    yp: np.ndarray
    corner_ids: np.ndarray  # (M, 2) inner-corner indices (i, j)
    corner_world: np.ndarray  # (M, 3)
    corner_pixels: np.ndarray  # (M, 2) camera pixels, real-valued
    points: Optional[np.ndarray] = None

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.xp) & np.isfinite(self.yp)

    def corner(self, ij) -> int:
        match = np.nonzero((self.corner_ids == np.asarray(ij)).all(axis=1))[0]
        if not len(match):
            raise KeyError(f"inner corner {tuple(ij)} is not visible")
        return int(match[0])

    def plan(self, points: dict, lengths: Sequence[tuple]) -> MeasurementPlan:
        """Build a measurement plan; ``points`` maps names to inner-corner ids."""
        idx = {name: self.corner(ij) for name, ij in points.items()}
        px = {name: tuple(self.corner_pixels[k]) for name, k in idx.items()}
        specs = []
        for name, a, b in lengths:
            actual = float(np.linalg.norm(self.corner_world[idx[a]] - self.corner_world[idx[b]]))
            specs.append(LengthSpec(name, a, b, actual))
        return MeasurementPlan(px, specs)

    def to_dict(self) -> dict:
        return {
            "corners": [
                {"id": [int(i), int(j)], "pixel": list(map(float, p)), "world_m": list(map(float, w))}
                for (i, j), p, w in zip(self.corner_ids, self.corner_pixels, self.corner_world)
            ]
        }


def default_plan_corners(board: Board) -> dict:
    """Four inner corners A, B, C, D inset two squares from the board edge."""
    sx, sy = board.squares_x, board.squares_y
    inset = 2 if min(sx, sy) > 4 else 1
    return {"A": (inset, inset), "B": (sx - inset, inset), "C": (sx - inset, sy - inset), "D": (inset, sy - inset)}


PLAN_LENGTHS = [("AB", "A", "B"), ("BC", "B", "C"), ("CD", "C", "D"), ("DA", "D", "A"), ("AC", "A", "C"), ("BD", "B", "D")]


def default_plan(gt: GroundTruth, board: Board) -> MeasurementPlan:
    return gt.plan(default_plan_corners(board), PLAN_LENGTHS)


def corner_truth(rig: StereoRig, board: Board):
    """Inner corners visible to the camera: ``(ids, world points, camera pixels)``."""
    ids = board.inner_corner_ids()
    world = board.to_world(board.corner_board_xy(ids))
    front = world[:, 2] > 0
    ids, world = ids[front], world[front]
    px = project(rig.camera, rig.camera_pose, world)
    cam = rig.camera
    vis = (px[:, 0] >= 0) & (px[:, 0] <= cam.width - 1) & (px[:, 1] >= 0) & (px[:, 1] <= cam.height - 1)
    return ids[vis], world[vis], px[vis]


def ground_truth(rig: StereoRig, scene: SceneSpec, trace: SceneTrace) -> GroundTruth:
    depth = np.where(trace.hit, trace.points[..., 2], np.nan)
    ids, world, px = corner_truth(rig, scene.board)
    return GroundTruth(
        depth,
        trace.proj_uv[..., 0].copy(),
        trace.proj_uv[..., 1].copy(),
        ids,
        world,
        px,
        np.where(trace.lit[..., None], trace.points, np.nan),
    )


def plan_for_board(rig: StereoRig, board: Board) -> MeasurementPlan:
    """Default A-B-C-D plan for ``board`` seen by ``rig``'s camera, without rendering."""
    ids, world, px = corner_truth(rig, board)
    gt = GroundTruth(np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0)), ids, world, px)
    return default_plan(gt, board)


def render_scan(rig: StereoRig, scene: SceneSpec, stack: PatternStack, opts: Optional[RenderOptions] = None):
    """Render one capture per pattern in ``stack``; returns ``(captures, ground_truth)``."""
    proj = rig.projector
    for spec in stack.manifest.specs.values():
        if (spec.proj_width, spec.proj_height) != (proj.width, proj.height):
            raise ValueError("pattern dimensions do not match the projector")
    trace = trace_scene(rig, scene)
    captures = [shade(trace, img, scene, frame, opts) for frame, img in enumerate(stack.images)]
    return captures, ground_truth(rig, scene, trace)


@dataclass
class CalibrationViewData:
    """Synthetic observations of one board placement."""

    board: Board
    camera_view: "object"  # calibration.PlanarView of the physical corners
    projected_cam_pixels: np.ndarray
    projector_pixels: np.ndarray
    projector_view_true: "object"  # PlanarView with exact board points (oracle)


def projector_corner_grid(proj: SensorModel, nx: int = 9, ny: int = 7, margin: float = 0.12) -> np.ndarray:
    us = np.linspace(margin * proj.width, (1 - margin) * proj.width, nx)
    vs = np.linspace(margin * proj.height, (1 - margin) * proj.height, ny)
    u, v = np.meshgrid(us, vs)
    return np.column_stack([u.ravel(), v.ravel()])


def synthesize_calibration_view(rig: StereoRig, board: Board, proj_grid=None) -> CalibrationViewData:
    from .calibration import PlanarView

    ids = board.inner_corner_ids()
    bxy = board.corner_board_xy(ids)
    cam_px = project(rig.camera, rig.camera_pose, board.to_world(bxy))
    cam_view = PlanarView(bxy, cam_px)

    grid = projector_corner_grid(rig.projector) if proj_grid is None else np.asarray(proj_grid, float)
    rays = pixel_to_ray(rig.projector, rig.projector_pose, grid)
    n = board.normal
    t = ((board.origin - rays.origin) @ n) / (rays.direction @ n)
    P = rays.origin + t[:, None] * rays.direction
    rel = P - board.origin
    bx, by = rel @ board.x_axis, rel @ board.y_axis
    w, h = board.size
    on_board = (t > 0) & (bx >= 0) & (bx <= w) & (by >= 0) & (by <= h)
    P, grid = P[on_board], grid[on_board]
    proj_cam_px = project(rig.camera, rig.camera_pose, P)
    true_view = PlanarView(np.column_stack([bx[on_board], by[on_board]]), grid)
    return CalibrationViewData(board, cam_view, proj_cam_px, grid, true_view)


def _rot(axis: str, deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


DEFAULT_TILTS = [("x", 25.0, "y", 0.0), ("x", -25.0, "y", 10.0), ("y", 30.0, "x", 5.0), ("y", -30.0, "x", -8.0), ("x", 18.0, "y", 22.0)]


def default_calibration_boards(rig: StereoRig, distances=(1.8, 2.0, 2.2, 2.4, 2.0), **board_kwargs) -> list:
    """Tilted boards centred on the projector's optical footprint."""
    kwargs = dict(squares_x=16, squares_y=12, square_size=0.08)
    kwargs.update(board_kwargs)
    proj = rig.projector
    center_ray = pixel_to_ray(proj, rig.projector_pose, np.array([proj.width / 2, proj.height / 2]))
    boards = []
    for (a1, d1, a2, d2), dist in zip(DEFAULT_TILTS, distances):
        center = center_ray.origin + dist * center_ray.direction
        boards.append(Board.facing(center, _rot(a1, d1) @ _rot(a2, d2), **kwargs))
    return boards
