"""Calibrate the camera, the projector (as an inverse camera) and the
projector-to-camera pose from five synthetic checkerboard views.

    python3 demos/calibration.py
"""
import numpy as np

from cpscan.calibration import calibrate_intrinsics, camera_to_board, projector_view_from_camera, stereo_extrinsics
from cpscan.fixtures import reference_rig
from cpscan.simulator import default_calibration_boards, synthesize_calibration_view

truth = reference_rig(distortion=False)
data = [synthesize_calibration_view(truth, b) for b in default_calibration_boards(truth)]
print(f"{len(data)} views, {len(data[0].camera_view.pixels)} corners each")

cam = calibrate_intrinsics([d.camera_view for d in data], (1600, 1200))
print("camera   ", {k: round(getattr(cam.model, k), 4) for k in ("fx", "fy", "cx", "cy")})
print("  truth  ", {k: getattr(truth.camera, k) for k in ("fx", "fy", "cx", "cy")})

# projector corners are mapped onto the board through the calibrated camera
pviews = [
    projector_view_from_camera(camera_to_board(d.camera_view, cam.model), d.projected_cam_pixels, d.projector_pixels)
    for d in data
]
proj = calibrate_intrinsics(pviews, (1024, 768))
print("projector", {k: round(getattr(proj.model, k), 4) for k in ("fx", "fy", "cx", "cy")})
print("  truth  ", {k: getattr(truth.projector, k) for k in ("fx", "fy", "cx", "cy")})

pose = stereo_extrinsics(data[0].camera_view, cam.model, pviews[0], proj.model)
print(f"baseline {np.linalg.norm(pose.translation):.9f} m (truth {truth.baseline:.3f} m)")
print("max reprojection rms:", max(cam.rms + proj.rms))
