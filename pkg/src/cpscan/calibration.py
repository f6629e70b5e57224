"""Closed-form planar calibration of cameras and (inverse-camera) projectors.

Intrinsics come from the image of the absolute conic, constrained by one
homography per board view; skew is fixed at zero. Distortion is never
estimated here. Coefficients supplied with a model are honored when pixels
are converted to ideal pinhole coordinates.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateConfigurationError, NumericalError
from .geometry import (
    Homography,
    Pose,
    SensorModel,
    estimate_homography_dlt,
    normalized_from_pixels,
    project,
    relative_pose,
)

log = logging.getLogger(__name__)

DEGENERACY_RATIO = 1e-9


@dataclass
class PlanarView:
    """Board-plane points (meters, z = 0) and the pixels observing them."""

    board_points: np.ndarray
    pixels: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.board_points = np.asarray(self.board_points, dtype=float).reshape(-1, 2)
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(self.board_points) != len(self.pixels):
            raise ValueError("board_points and pixels differ in length")
        if len(self.pixels) < 4:
            raise ValueError(f"a planar view needs at least 4 points, got {len(self.pixels)}")
        centered = self.board_points - self.board_points.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[1] <= 1e-9 * sv[0]:
            raise ValueError("board points are collinear")

    def to_dict(self) -> dict:
        return {"board_points_m": self.board_points.tolist(), "pixels": self.pixels.tolist()}


@dataclass
class CalibrationResult:
    model: SensorModel
    poses: list
    rms: list = field(default_factory=list)


def ideal_pixels(model: SensorModel, pixels) -> np.ndarray:
    """Remove radial distortion, returning pixels of the equivalent pinhole sensor."""
    if model.k1 == 0.0 and model.k2 == 0.0:
        return np.asarray(pixels, dtype=float)
    xy = normalized_from_pixels(model, pixels)
    return xy * np.array([model.fx, model.fy]) + np.array([model.cx, model.cy])


def pose_from_homography(K, H: Homography) -> Pose:
    """Board pose from a board(meters)->pixel homography of a pinhole sensor."""
    K = K.K if isinstance(K, SensorModel) else np.asarray(K, dtype=float)
    M = np.linalg.solve(K, H.matrix if isinstance(H, Homography) else np.asarray(H, float))
    lam = 1.0 / np.linalg.norm(M[:, 0])
    if M[2, 2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * M[:, 0], lam * M[:, 1], lam * M[:, 2]
    if t[2] <= 0:
        raise NumericalError("board lies behind the sensor for both homography signs")
    R = np.column_stack([r1, r2, np.cross(r1, r2)])
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return Pose(R, t)


def _conic_row(H: np.ndarray, i: int, j: int) -> np.ndarray:
    hi, hj = H[:, i], H[:, j]
    # coefficients of [B11, B22, B13, B23, B33]; B12 is pinned to 0 (zero skew)
    return np.array(
        [
            hi[0] * hj[0],
            hi[1] * hj[1],
            hi[2] * hj[0] + hi[0] * hj[2],
            hi[2] * hj[1] + hi[1] * hj[2],
            hi[2] * hj[2],
        ]
    )


def _pixel_normalizer(width: int, height: int) -> np.ndarray:
    s = 2.0 / (width + height)
    return np.array([[s, 0.0, -s * width / 2.0], [0.0, s, -s * height / 2.0], [0.0, 0.0, 1.0]])


def reprojection_rms(model: SensorModel, pose: Pose, view: PlanarView) -> float:
    pts = np.column_stack([view.board_points, np.zeros(len(view.board_points))])
    err = project(model, pose, pts) - view.pixels
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def calibrate_intrinsics(views: Sequence[PlanarView], image_size) -> CalibrationResult:
    """Zero-skew closed-form intrinsics from >= 3 planar views.

    ``image_size`` is ``(width, height)`` of the sensor.
    """
    if len(views) < 3:
        raise ValueError(f"need at least 3 views, got {len(views)}")
    width, height = int(image_size[0]), int(image_size[1])
    N = _pixel_normalizer(width, height)
    rows, homographies = [], []
    for view in views:
        pn = view.pixels @ N[:2, :2].T + N[:2, 2]
        Hn = estimate_homography_dlt(view.board_points, pn).matrix
        homographies.append(Hn)
        # scale the whole homography, not each row: a row that vanishes for a
        # degenerate view must stay near zero
        Hs = Hn / np.linalg.norm(Hn[:, :2])
        rows += [_conic_row(Hs, 0, 1), _conic_row(Hs, 0, 0) - _conic_row(Hs, 1, 1)]
    V = np.array(rows)
    _, s, Vt = np.linalg.svd(V)
    if s[-2] <= DEGENERACY_RATIO * s[0]:
        raise DegenerateConfigurationError("view set is degenerate (board orientations too similar)")
    B11, B22, B13, B23, B33 = Vt[-1] if Vt[-1][0] > 0 else -Vt[-1]
    if B11 <= 0 or B22 <= 0:
        raise NumericalError("estimated absolute conic is not positive definite")
    cx, cy = -B13 / B11, -B23 / B22
    lam = B33 - B13 * B13 / B11 - B23 * B23 / B22
    if lam <= 0:
        raise NumericalError("estimated absolute conic is not positive definite")
    Kn = np.array([[np.sqrt(lam / B11), 0.0, cx], [0.0, np.sqrt(lam / B22), cy], [0.0, 0.0, 1.0]])
    K = np.linalg.solve(N, Kn)
    model = SensorModel.from_K(K, width, height)

    poses, rms = [], []
    for view, Hn in zip(views, homographies):
        pose = pose_from_homography(K, Homography(np.linalg.solve(N, Hn)))
        poses.append(pose)
        rms.append(reprojection_rms(model, pose, view))
    return CalibrationResult(model, poses, rms)


def projector_view_from_camera(
    cam_to_board: Homography,
    projected_corner_cam_pixels,
    projector_corner_pixels,
    board_bounds=None,
) -> PlanarView:
    """Turn projected-corner observations into a 2D-3D view for the projector.

    Each camera observation is carried onto the board plane by
    ``cam_to_board`` and paired with the projector pixel that emitted it.
    ``board_bounds`` is ``((xmin, ymin), (xmax, ymax))`` in meters; points
    landing outside are dropped with a warning.
    """
    cam = np.asarray(projected_corner_cam_pixels, dtype=float).reshape(-1, 2)
    proj = np.asarray(projector_corner_pixels, dtype=float).reshape(-1, 2)
    if len(cam) != len(proj):
        raise ValueError(f"{len(cam)} camera observations but {len(proj)} projector corners")
    board = cam_to_board(cam)
    keep = np.isfinite(board).all(axis=1)
    if board_bounds is not None:
        (x0, y0), (x1, y1) = board_bounds
        keep &= (board[:, 0] >= x0) & (board[:, 0] <= x1) & (board[:, 1] >= y0) & (board[:, 1] <= y1)
    dropped = int(np.sum(~keep))
    if dropped:
        warnings.warn(f"{dropped} projected corner(s) fell outside the board and were dropped", stacklevel=2)
    return PlanarView(board[keep], proj[keep], dropped=dropped)


def camera_to_board(view: PlanarView, model: Optional[SensorModel] = None) -> Homography:
    """Homography taking (distorted) camera pixels onto board coordinates."""
    px = view.pixels if model is None else ideal_pixels(model, view.pixels)
    H = estimate_homography_dlt(px, view.board_points)
    if model is None or (model.k1 == 0.0 and model.k2 == 0.0):
        return H
    return _DistortedHomography(H.matrix, model)


class _DistortedHomography(Homography):
    """Homography applied after removing a sensor's radial distortion."""

    def __init__(self, matrix, model: SensorModel):
        super().__init__(matrix)
        object.__setattr__(self, "_model", model)

    def __call__(self, points):
        return super().__call__(ideal_pixels(self._model, points))


def stereo_extrinsics(view_cam: PlanarView, cam_model: SensorModel, view_proj: PlanarView, proj_model: SensorModel) -> Pose:
    """Projector-to-camera transform from one shared board placement."""
    poses = []
    for view, model in ((view_cam, cam_model), (view_proj, proj_model)):
        H = estimate_homography_dlt(view.board_points, ideal_pixels(model, view.pixels))
        poses.append(pose_from_homography(model, H))
    return relative_pose(poses[0], poses[1])
