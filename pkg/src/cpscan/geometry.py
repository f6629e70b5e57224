"""Pinhole sensor model with two-term radial distortion, rigid poses,
homographies and ray-ray triangulation.

All functions broadcast over leading array dimensions: a pixel argument may
be ``(2,)`` or ``(..., 2)``, a point ``(3,)`` or ``(..., 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DegenerateConfigurationError, NumericalError

UNDISTORT_TOL = 1e-12
UNDISTORT_MAX_ITER = 50
PARALLEL_TOL = 1e-12


@dataclass(frozen=True)
class SensorModel:
    """Intrinsics of a camera, or of a projector treated as an inverse camera."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor size must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")
        for name in ("fx", "fy", "cx", "cy", "k1", "k2"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_K(cls, K, width, height, k1=0.0, k2=0.0) -> "SensorModel":
        K = np.asarray(K, dtype=float)
        return cls(int(width), int(height), float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), float(k1), float(k2))

    def without_distortion(self) -> "SensorModel":
        return SensorModel(self.width, self.height, self.fx, self.fy, self.cx, self.cy)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("width", "height", "fx", "fy", "cx", "cy", "k1", "k2")}


def _check_rotation(R: np.ndarray, tol: float) -> None:
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise ValueError("rotation must be a finite 3x3 matrix")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation has det != +1")


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x_sensor = R @ x_world + t`` (translation in meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tol: float = field(default=1e-9, repr=False, compare=False)

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        _check_rotation(R, self.tol)
        if not np.isfinite(t).all():
            raise ValueError("translation must be finite")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @property
    def center(self) -> np.ndarray:
        """Sensor center expressed in the world frame."""
        return -self.rotation.T @ self.translation

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, self.center)

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self o other``: apply ``other`` first."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def rotation_from_axis_angle(rvec) -> np.ndarray:
    """Rodrigues formula: rotation vector (radians) -> 3x3 matrix."""
    rvec = np.asarray(rvec, dtype=float).reshape(3)
    theta = np.linalg.norm(rvec)
    if theta < 1e-15:
        return np.eye(3)
    k = rvec / theta
    Kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * Kx + (1.0 - np.cos(theta)) * (Kx @ Kx)


def axis_angle_from_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    if theta < 1e-12:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off R + I
        M = (R + np.eye(3)) / 2.0
        k = np.sqrt(np.clip(np.diag(M), 0.0, None))
        i = int(np.argmax(k))
        k = M[:, i] / k[i]
        return theta * k / np.linalg.norm(k)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta * w / (2.0 * np.sin(theta))


def distort_normalized(k1: float, k2: float, xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    return xy * (1.0 + k1 * r2 + k2 * r2 * r2)


def undistort_normalized(k1: float, k2: float, xy_d) -> np.ndarray:
    """Invert :func:`distort_normalized` by fixed-point iteration.

    Raises ConvergenceError if any entry still moves by more than 1e-12
    after 50 iterations.
    """
    xy_d = np.asarray(xy_d, dtype=float)
    if k1 == 0.0 and k2 == 0.0:
        return xy_d.copy()
    xy = xy_d.copy()
    for _ in range(UNDISTORT_MAX_ITER):
        r2 = np.sum(xy * xy, axis=-1, keepdims=True)
        new = xy_d / (1.0 + k1 * r2 + k2 * r2 * r2)
        step = np.max(np.abs(new - xy)) if new.size else 0.0
        xy = new
        if step < UNDISTORT_TOL:
            return xy
    if not np.isfinite(step) or step >= UNDISTORT_TOL:
        raise ConvergenceError(f"undistortion did not converge (last update {step:.3g})")
    return xy


def project(model: SensorModel, pose: Pose, points) -> np.ndarray:
    """Project world points to (distorted) pixel coordinates."""
    Xs = pose.apply(points)
    z = Xs[..., 2:3]
    if np.any(z <= 0):
        raise NumericalError("point has non-positive depth in the sensor frame")
    xy = distort_normalized(model.k1, model.k2, Xs[..., :2] / z)
    return xy * np.array([model.fx, model.fy]) + np.array([model.cx, model.cy])


class Ray(NamedTuple):
    """Origin (m) and unit direction; either may carry leading batch dimensions."""

    origin: np.ndarray
    direction: np.ndarray


def normalized_from_pixels(model: SensorModel, pixels) -> np.ndarray:
    """Distorted pixel -> undistorted normalized image coordinates."""
    pixels = np.asarray(pixels, dtype=float)
    xy_d = (pixels - np.array([model.cx, model.cy])) / np.array([model.fx, model.fy])
    return undistort_normalized(model.k1, model.k2, xy_d)


def pixel_to_ray(model: SensorModel, pose: Pose, pixels) -> Ray:
    """Back-project pixel(s) to world-frame rays through the sensor center."""
    xy = normalized_from_pixels(model, pixels)
    d = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
    d = d @ pose.rotation  # == (R^T d^T)^T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return Ray(np.broadcast_to(pose.center, d.shape).copy(), d)


@dataclass(frozen=True)
class Homography:
    """3x3 projective map between planes, normalized so ``h33 = 1`` when possible."""

    matrix: np.ndarray

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float).reshape(3, 3)
        if not np.isfinite(H).all():
            raise ValueError("homography must be finite")
        if abs(H[2, 2]) > 1e-12 * np.abs(H).max():
            H = H / H[2, 2]
        s = np.linalg.svd(H, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise DegenerateConfigurationError("homography is singular")
        H.flags.writeable = False
        object.__setattr__(self, "matrix", H)

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        q = p @ self.matrix[:, :2].T + self.matrix[:, 2]
        return q[..., :2] / q[..., 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def _hartley(points: np.ndarray) -> np.ndarray:
    c = points.mean(axis=0)
    d = np.sqrt(((points - c) ** 2).sum(axis=1)).mean()
    if d <= 0:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _collinear(a, b, c, tol=1e-9) -> bool:
    area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    scale = max(np.linalg.norm(b - a) * np.linalg.norm(c - a), 1e-300)
    return area <= tol * scale


def estimate_homography_dlt(src, dst) -> Homography:
    """Normalized DLT estimate of the homography mapping ``src`` onto ``dst``."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same number of points")
    n = len(src)
    if n < 4:
        raise ValueError(f"need at least 4 correspondences, got {n}")
    if n == 4:
        for i in range(4):
            a, b, c = (src[j] for j in range(4) if j != i)
            if _collinear(a, b, c):
                raise DegenerateConfigurationError("three of the four source points are collinear")
    else:
        centered = src - src.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[1] <= 1e-9 * sv[0]:
            raise DegenerateConfigurationError("source points are collinear")

    Ts, Td = _hartley(src), _hartley(dst)
    ps = src @ Ts[:2, :2].T + Ts[:2, 2]
    pd = dst @ Td[:2, :2].T + Td[:2, 2]
    A = np.zeros((2 * n, 9))
    x, y = ps[:, 0], ps[:, 1]
    u, v = pd[:, 0], pd[:, 1]
    A[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(n)])
    A[0::2, 6:9] = np.column_stack([u * x, u * y, u])
    A[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(n)])
    A[1::2, 6:9] = np.column_stack([v * x, v * y, v])
    _, s, Vt = np.linalg.svd(A)
    if s[-2] <= 1e-10 * s[0]:
        raise DegenerateConfigurationError("homography design matrix has a multi-dimensional null space")
    Hn = Vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(Td) @ Hn @ Ts)


def symmetric_transfer_error(H: Homography, src, dst) -> np.ndarray:
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    fwd = np.linalg.norm(H(src) - dst, axis=-1)
    bwd = np.linalg.norm(H.inverse()(dst) - src, axis=-1)
    return fwd + bwd


def triangulate_rays(r1: Ray, r2: Ray):
    """Batched midpoint triangulation.

    Returns ``(points, gaps, ok)``; entries whose rays are near-parallel get
    NaN and ``ok == False``. The arithmetic is arranged so that swapping the
    two rays gives bit-identical results.
    """
    o1, d1 = np.asarray(r1.origin, float), np.asarray(r1.direction, float)
    o2, d2 = np.asarray(r2.origin, float), np.asarray(r2.direction, float)
    w0 = o1 - o2
    a = np.sum(d1 * d1, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    c = np.sum(d2 * d2, axis=-1)
    d = np.sum(d1 * w0, axis=-1)
    e = np.sum(d2 * w0, axis=-1)
    ok = np.abs(b) < (1.0 - PARALLEL_TOL) * np.sqrt(a * c)
    denom = np.where(ok, a * c - b * b, 1.0)
    s = (b * e - c * d) / denom
    t = (a * e - b * d) / denom
    p1 = o1 + s[..., None] * d1
    p2 = o2 + t[..., None] * d2
    mid = (p1 + p2) / 2.0
    gap = np.linalg.norm(p1 - p2, axis=-1)
    mid = np.where(ok[..., None], mid, np.nan)
    gap = np.where(ok, gap, np.nan)
    return mid, gap, ok


def triangulate_midpoint(ray_cam: Ray, ray_proj: Ray):
    """Midpoint of the common perpendicular of two rays and its length (the gap)."""
    point, gap, ok = triangulate_rays(ray_cam, ray_proj)
    if not np.all(ok):
        raise DegenerateConfigurationError("rays are (near-)parallel")
    return point, gap


def relative_pose(pose_cam: Pose, pose_proj: Pose) -> Pose:
    """Transform taking projector-frame coordinates to camera-frame coordinates."""
    R = pose_cam.rotation @ pose_proj.rotation.T
    return Pose(R, pose_cam.translation - R @ pose_proj.translation)


@dataclass(frozen=True)
class StereoRig:
    """Camera + projector; the camera frame is the world frame."""

    camera: SensorModel
    projector: SensorModel
    projector_to_camera: Pose

    @property
    def camera_pose(self) -> Pose:
        return Pose.identity()

    @property
    def projector_pose(self) -> Pose:
        """World (camera) frame -> projector frame."""
        return self.projector_to_camera.inverse()

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.projector_to_camera.translation))
