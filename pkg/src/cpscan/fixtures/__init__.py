"""Bundled fixtures: the reference rig, the 2.2 m checkerboard scene, its
A-B-C-D measurement plan and a set of synthetic calibration views.

The JSON files next to this module are generated by :func:`write_fixtures`;
the functions below are the canonical definitions.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import Pose, SensorModel, StereoRig
from ..simulator import Board, SceneSpec, Sphere, _rot

# reference intrinsics (camera 1600x1200, projector 1024x768)
REFERENCE_CAMERA = SensorModel(1600, 1200, 1362.2, 1372.2, 803.9, 590.1, 0.07, -0.14)
REFERENCE_PROJECTOR = SensorModel(1024, 768, 2261.7, 2262.8, 522.7, 713.8, 0.0, 0.0)

STANDOFF_M = 2.2
BASELINE_M = 0.25

FILES = {
    "calibration": "reference_calibration.json",
    "scene": "scene_board_2p2m.json",
    "scene_sphere": "scene_sphere_2p2m.json",
    "plan": "plan_board_2p2m.json",
    "views": "calibration_views.json",
}


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture (``calibration``, ``scene``, ``plan``, ...)."""
    return Path(str(resources.files(__name__).joinpath(FILES.get(name, name))))


def reference_rig(baseline: float = BASELINE_M, standoff: float = STANDOFF_M, distortion: bool = True) -> StereoRig:
    """Projector to the camera's right, toed in so both axes cross at ``standoff``."""
    cam = REFERENCE_CAMERA if distortion else REFERENCE_CAMERA.without_distortion()
    yaw = -np.degrees(np.arctan2(baseline, standoff))
    return StereoRig(cam, REFERENCE_PROJECTOR, Pose(_rot("y", yaw), [baseline, 0.0, 0.0]))


def metrology_board(standoff: float = STANDOFF_M) -> Board:
    """12x8 squares of 60 mm, centred in the projector footprint, slightly tilted."""
    return Board.facing(
        [0.0, -0.32 * standoff / STANDOFF_M, standoff],
        _rot("y", 8.0) @ _rot("x", 5.0),
        squares_x=12,
        squares_y=8,
        square_size=0.06,
        albedo_light=0.95,
        albedo_dark=0.55,
    )


def metrology_scene(gamma: float = 1.0, noise_sigma: float = 0.0, seed: int = 0) -> SceneSpec:
    return SceneSpec(metrology_board(), (), ambient=10.0, projector_gamma=gamma, noise_sigma=noise_sigma, seed=seed, shadows=True)


def sphere_scene(noise_sigma: float = 0.0, seed: int = 0) -> SceneSpec:
    """The metrology board with a ball hanging in front of it (casts a projector shadow)."""
    return SceneSpec(
        metrology_board(),
        (Sphere([0.05, -0.30, 1.95], 0.09, 0.8),),
        ambient=10.0,
        noise_sigma=noise_sigma,
        seed=seed,
        shadows=True,
    )


def write_fixtures(out_dir=None) -> None:
    from ..documents import save_calibration, save_plan, save_scene, views_to_dict, write_json
    from ..simulator import default_calibration_boards, plan_for_board, synthesize_calibration_view

    out = Path(out_dir) if out_dir else Path(__file__).parent
    rig = reference_rig()
    save_calibration(rig, out / FILES["calibration"])
    save_scene(metrology_scene(), out / FILES["scene"])
    save_scene(sphere_scene(), out / FILES["scene_sphere"])
    save_plan(plan_for_board(rig, metrology_board()), out / FILES["plan"])
    ideal = reference_rig(distortion=False)
    views = [synthesize_calibration_view(ideal, b) for b in default_calibration_boards(ideal)]
    doc = views_to_dict(views, (ideal.camera.width, ideal.camera.height), (ideal.projector.width, ideal.projector.height))
    write_json(doc, out / FILES["views"])

