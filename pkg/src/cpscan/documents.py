"""JSON documents: calibration, scene, measurement plan and calibration views.

Loaders validate against the target type's invariants and raise
:class:`~cpscan.errors.ConfigError` naming the offending field.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .calibration import PlanarView
from .errors import ConfigError
from .geometry import Pose, SensorModel, StereoRig, rotation_from_axis_angle
from .metrology import LengthSpec, MeasurementPlan
from .simulator import Board, SceneSpec, Sphere

ROTATION_TOL = 1e-6
SENSOR_FIELDS = ("width", "height", "fx", "fy", "cx", "cy", "k1", "k2")


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _get(doc: dict, key: str, ctx: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ConfigError(f"missing field '{ctx}{key}'")
    return doc[key]


def _real(doc, key, ctx, lo=-math.inf, hi=math.inf, lo_open=False) -> float:
    v = _get(doc, key, ctx)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"field '{ctx}{key}' must be a finite number, got {v!r}")
    if v < lo or v > hi or (lo_open and v == lo):
        raise ConfigError(f"field '{ctx}{key}' = {v} out of range")
    return float(v)


def _int(doc, key, ctx, lo=None) -> int:
    v = _get(doc, key, ctx)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field '{ctx}{key}' must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"field '{ctx}{key}' = {v} out of range (min {lo})")
    return v


def _vec(doc, key, ctx, n) -> np.ndarray:
    v = _get(doc, key, ctx)
    try:
        arr = np.asarray(v, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{ctx}{key}' must be a list of {n} numbers") from None
    if arr.size != n or not np.isfinite(arr).all():
        raise ConfigError(f"field '{ctx}{key}' must be a list of {n} finite numbers")
    return arr


def sensor_from_dict(doc: dict, ctx: str = "") -> SensorModel:
    width = _int(doc, "width", ctx, lo=1)
    height = _int(doc, "height", ctx, lo=1)
    fx = _real(doc, "fx", ctx, lo=0, lo_open=True)
    fy = _real(doc, "fy", ctx, lo=0, lo_open=True)
    cx = _real(doc, "cx", ctx, lo=0)
    cy = _real(doc, "cy", ctx, lo=0)
    k1 = _real(doc, "k1", ctx)
    k2 = _real(doc, "k2", ctx)
    try:
        return SensorModel(width, height, fx, fy, cx, cy, k1, k2)
    except ValueError as exc:
        raise ConfigError(f"{ctx or 'sensor'}: {exc}") from None


def pose_from_dict(doc: dict, ctx: str = "") -> Pose:
    if isinstance(doc, dict) and "rotation" in doc:
        R = _vec(doc, "rotation", ctx, 9).reshape(3, 3)
    elif isinstance(doc, dict) and "rotation_axis_angle" in doc:
        R = rotation_from_axis_angle(_vec(doc, "rotation_axis_angle", ctx, 3))
    else:
        raise ConfigError(f"missing field '{ctx}rotation'")
    t = _vec(doc, "translation_m", ctx, 3)
    try:
        return Pose(R, t, tol=ROTATION_TOL)
    except ValueError as exc:
        raise ConfigError(f"{ctx}rotation: non-orthonormal ({exc})") from None


def pose_to_dict(pose: Pose) -> dict:
    return {"rotation": pose.rotation.ravel().tolist(), "translation_m": pose.translation.tolist()}


def rig_from_dict(doc: dict) -> StereoRig:
    camera = sensor_from_dict(_get(doc, "camera", ""), "camera.")
    projector = sensor_from_dict(_get(doc, "projector", ""), "projector.")
    pose = pose_from_dict(_get(doc, "projector_to_camera", ""), "projector_to_camera.")
    return StereoRig(camera, projector, pose)


def rig_to_dict(rig: StereoRig, diagnostics: Optional[dict] = None) -> dict:
    doc = {
        "camera": rig.camera.to_dict(),
        "projector": rig.projector.to_dict(),
        "projector_to_camera": pose_to_dict(rig.projector_to_camera),
    }
    if diagnostics:
        doc["diagnostics"] = diagnostics
    return doc


def load_calibration(path) -> StereoRig:
    return rig_from_dict(read_json(path))


def save_calibration(rig: StereoRig, path, diagnostics: Optional[dict] = None) -> None:
    write_json(rig_to_dict(rig, diagnostics), path)


def scene_from_dict(doc: dict) -> SceneSpec:
    b = _get(doc, "board", "")
    ctx = "board."
    try:
        board = Board(
            _vec(b, "origin_m", ctx, 3),
            _vec(b, "x_axis", ctx, 3),
            _vec(b, "y_axis", ctx, 3),
            _int(b, "squares_x", ctx, lo=2),
            _int(b, "squares_y", ctx, lo=2),
            _real(b, "square_size_m", ctx, lo=0, lo_open=True),
            _real(b, "albedo_light", ctx, 0, 1),
            _real(b, "albedo_dark", ctx, 0, 1),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"board: {exc}") from None
    spheres = []
    for i, s in enumerate(doc.get("spheres", [])):
        sctx = f"spheres[{i}]."
        spheres.append(
            Sphere(_vec(s, "center_m", sctx, 3), _real(s, "radius_m", sctx, lo=0, lo_open=True), _real(s, "albedo", sctx, 0, 1))
        )
    shadows = _get(doc, "shadows", "")
    if not isinstance(shadows, bool):
        raise ConfigError("field 'shadows' must be a boolean")
    return SceneSpec(
        board,
        tuple(spheres),
        ambient=_real(doc, "ambient", "", 0, 255),
        projector_gamma=_real(doc, "projector_gamma", "", lo=0, lo_open=True),
        noise_sigma=_real(doc, "noise_sigma", "", lo=0),
        seed=_int(doc, "seed", ""),
        shadows=shadows,
    )


def scene_to_dict(scene: SceneSpec) -> dict:
    b = scene.board
    return {
        "board": {
            "origin_m": b.origin.tolist(),
            "x_axis": b.x_axis.tolist(),
            "y_axis": b.y_axis.tolist(),
            "squares_x": b.squares_x,
            "squares_y": b.squares_y,
            "square_size_m": b.square_size,
            "albedo_light": b.albedo_light,
            "albedo_dark": b.albedo_dark,
        },
        "spheres": [{"center_m": s.center.tolist(), "radius_m": s.radius, "albedo": s.albedo} for s in scene.spheres],
        "ambient": scene.ambient,
        "projector_gamma": scene.projector_gamma,
        "noise_sigma": scene.noise_sigma,
        "seed": scene.seed,
        "shadows": scene.shadows,
    }


def load_scene(path) -> SceneSpec:
    return scene_from_dict(read_json(path))


def save_scene(scene: SceneSpec, path) -> None:
    write_json(scene_to_dict(scene), path)


def plan_from_dict(doc: dict) -> MeasurementPlan:
    pts = _get(doc, "points", "")
    if not isinstance(pts, dict) or not pts:
        raise ConfigError("field 'points' must be a non-empty mapping")
    points = {name: tuple(_vec(pts, name, "points.", 2)) for name in pts}
    lengths = []
    for i, L in enumerate(_get(doc, "lengths", "")):
        ctx = f"lengths[{i}]."
        name, a, b = _get(L, "name", ctx), _get(L, "from", ctx), _get(L, "to", ctx)
        for p in (a, b):
            if p not in points:
                raise ConfigError(f"{ctx[:-1]} ({name}) references unknown point {p!r}")
        lengths.append(LengthSpec(str(name), a, b, _real(L, "actual_m", ctx, lo=0, lo_open=True)))
    if not lengths:
        raise ConfigError("plan defines no lengths")
    return MeasurementPlan(points, lengths)


def load_plan(path) -> MeasurementPlan:
    return plan_from_dict(read_json(path))


def save_plan(plan: MeasurementPlan, path) -> None:
    write_json(plan.to_dict(), path)


def _planar_view(doc, ctx, board_key="board_points_m", pixel_key="pixels") -> PlanarView:
    try:
        return PlanarView(np.asarray(_get(doc, board_key, ctx), float), np.asarray(_get(doc, pixel_key, ctx), float))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{ctx}: {exc}") from None


def views_from_dict(doc: dict) -> list:
    """Parse a views document into dicts with a ``camera`` PlanarView and optional
    ``projected`` arrays (``camera_pixels``, ``projector_pixels``) and ``board_bounds``."""
    out = []
    for i, v in enumerate(_get(doc, "views", "")):
        ctx = f"views[{i}]."
        entry = {"camera": _planar_view(v, ctx)}
        if "projected" in v:
            p = v["projected"]
            cam = np.asarray(_get(p, "camera_pixels", ctx + "projected."), float).reshape(-1, 2)
            prj = np.asarray(_get(p, "projector_pixels", ctx + "projected."), float).reshape(-1, 2)
            if len(cam) != len(prj):
                raise ConfigError(f"{ctx}projected: camera_pixels and projector_pixels differ in length")
            entry["projected"] = (cam, prj)
        if "board_size_m" in v:
            w, h = _vec(v, "board_size_m", ctx, 2)
            entry["board_bounds"] = ((0.0, 0.0), (w, h))
        out.append(entry)
    return out


def load_views(path) -> tuple[list, dict]:
    """Return ``(views, sizes)`` where ``sizes`` holds optional camera/projector image sizes."""
    doc = read_json(path)
    sizes = {}
    for key in ("camera_size", "projector_size"):
        if key in doc:
            sizes[key] = tuple(int(x) for x in _vec(doc, key, "", 2))
    return views_from_dict(doc), sizes


def views_to_dict(view_data, camera_size=None, projector_size=None) -> dict:
    """Serialize :class:`~cpscan.simulator.CalibrationViewData` items as a views document."""
    doc = {}
    if camera_size is not None:
        doc["camera_size"] = list(camera_size)
    if projector_size is not None:
        doc["projector_size"] = list(projector_size)
    views = []
    for vd in view_data:
        v = vd.camera_view.to_dict()
        v["board_size_m"] = list(vd.board.size)
        v["projected"] = {
            "camera_pixels": np.asarray(vd.projected_cam_pixels).tolist(),
            "projector_pixels": np.asarray(vd.projector_pixels).tolist(),
        }
        views.append(v)
    doc["views"] = views
    return doc
