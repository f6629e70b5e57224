"""End-to-end helpers: correspondence -> point map, and simulate -> decode -> triangulate."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .decode import CorrespondenceMap, DecodeOptions, DecodeResult, decode_stack
from .geometry import StereoRig, pixel_to_ray, triangulate_rays
from .patterns import HORIZONTAL, VERTICAL, PatternSpec, PatternStack, full_pattern_stack
from .simulator import GroundTruth, RenderOptions, SceneSpec, camera_pixel_grid, render_scan

DEFAULT_MAX_GAP = 0.005


@dataclass
class Reconstruction:
    points: np.ndarray  # (H, W, 3), NaN where invalid
    gap: np.ndarray  # (H, W), NaN where invalid
    valid: np.ndarray

    def cloud_arrays(self):
        v, u = np.nonzero(self.valid)
        return self.points[v, u], np.column_stack([u, v]).astype(float)


def triangulate_correspondence(rig: StereoRig, corr: CorrespondenceMap, max_gap: float = DEFAULT_MAX_GAP) -> Reconstruction:
    """Intersect camera-pixel rays with the rays of their continuous projector pixels."""
    valid = np.asarray(corr.valid, bool).copy()
    h, w = valid.shape
    if (h, w) != (rig.camera.height, rig.camera.width):
        raise ValueError(f"correspondence map {w}x{h} does not match the camera")
    points = np.full((h, w, 3), np.nan)
    gap = np.full((h, w), np.nan)
    idx = np.nonzero(valid)
    if len(idx[0]):
        cam_px = camera_pixel_grid(rig.camera)[idx]
        proj_px = np.column_stack([corr.xp[idx], corr.yp[idx]])
        rc = pixel_to_ray(rig.camera, rig.camera_pose, cam_px)
        rp = pixel_to_ray(rig.projector, rig.projector_pose, proj_px)
        p, g, ok = triangulate_rays(rc, rp)
        keep = ok & (g <= max_gap)
        points[idx] = np.where(keep[:, None], p, np.nan)
        gap[idx] = np.where(keep, g, np.nan)
        valid[idx] = keep
    return Reconstruction(points, gap, valid)


def default_specs(proj_width: int = 1024, proj_height: int = 768, w_v: int = 64, w_h: int = 96, **kw):
    return (
        PatternSpec(proj_width, proj_height, w_v, VERTICAL, **kw),
        PatternSpec(proj_width, proj_height, w_h, HORIZONTAL, **kw),
    )


@dataclass
class ScanResult:
    captures: list
    decoded: DecodeResult
    reconstruction: Reconstruction
    truth: GroundTruth
    stack: PatternStack


def run_scan(
    rig: StereoRig,
    scene: SceneSpec,
    stack: Optional[PatternStack] = None,
    seed: Optional[int] = None,
    decode_opts: Optional[DecodeOptions] = None,
    render_opts: Optional[RenderOptions] = None,
    max_gap: float = DEFAULT_MAX_GAP,
) -> ScanResult:
    """Render, decode and triangulate one synthetic scan."""
    if stack is None:
        stack = full_pattern_stack(*default_specs(rig.projector.width, rig.projector.height))
    render_opts = render_opts or RenderOptions()
    if seed is not None:
        render_opts = RenderOptions(render_opts.blur_radius, seed)
    captures, truth = render_scan(rig, scene, stack, render_opts)
    decoded = decode_stack(captures, stack.manifest, decode_opts)
    recon = triangulate_correspondence(rig, decoded.correspondence, max_gap)
    return ScanResult(captures, decoded, recon, truth, stack)
