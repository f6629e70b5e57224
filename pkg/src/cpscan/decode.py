"""Capture stack -> wrapped phase, fringe order, absolute phase, correspondence.

Float maps use NaN for invalid pixels. Code maps are int64 arrays; their
validity travels separately as a boolean mask.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .patterns import HORIZONTAL, VERTICAL, PatternManifest, PatternSpec, gray_decode

TWO_PI = 2.0 * np.pi
SQRT3 = np.sqrt(3.0)
DEFAULT_M_MIN = 8.0


def _stack(images: Sequence[np.ndarray]) -> np.ndarray:
    arrs = [np.asarray(im, dtype=np.float64) for im in images]
    shapes = {a.shape for a in arrs}
    if len(shapes) != 1:
        raise ValueError(f"image dimensions differ: {sorted(shapes)}")
    return np.stack(arrs)


def wrapped_phase(I1, I2, I3) -> np.ndarray:
    """Three-step phase in (-pi, pi]; NaN where both arctangent arguments vanish."""
    I1, I2, I3 = _stack([I1, I2, I3])
    num = SQRT3 * (I1 - I3)
    den = 2.0 * I2 - I1 - I3
    phi = np.arctan2(num, den)
    phi[phi == -np.pi] = np.pi
    phi[(num == 0) & (den == 0)] = np.nan
    return phi


def modulation(I1, I2, I3) -> np.ndarray:
    I1, I2, I3 = _stack([I1, I2, I3])
    return np.sqrt(3.0 * (I1 - I3) ** 2 + (2.0 * I2 - I1 - I3) ** 2) / 3.0


def modulation_and_mask(I1, I2, I3, m_min: float = DEFAULT_M_MIN):
    """Per-pixel fringe modulation and the mask ``M >= m_min``.

    With ``m_min == 0`` only pixels with strictly positive modulation are
    kept, since a zero-modulation pixel carries no phase.
    """
    M = modulation(I1, I2, I3)
    mask = M >= m_min if m_min > 0 else M > 0
    return M, mask


def threshold_map(I1, I2, I3) -> np.ndarray:
    """Per-pixel binarization threshold: the mean of the three sinusoid captures."""
    return _stack([I1, I2, I3]).mean(axis=0)


def decode_codewords(bit_planes: Sequence[np.ndarray], threshold, code_kind: str = "gray") -> np.ndarray:
    """Threshold MSB-first bit-planes into a period-index map.

    A capture exactly equal to the threshold decodes as 1.
    """
    if len(bit_planes) > 31:
        raise ValueError(f"at most 31 bit-planes are supported, got {len(bit_planes)}")
    if code_kind not in ("gray", "binary"):
        raise ValueError(f"unknown code kind {code_kind!r}")
    threshold = np.asarray(threshold, dtype=np.float64)
    word = np.zeros(threshold.shape, dtype=np.int64)
    for plane in bit_planes:
        plane = np.asarray(plane)
        if plane.shape != threshold.shape:
            raise ValueError(f"bit-plane shape {plane.shape} differs from threshold {threshold.shape}")
        word = (word << 1) | (plane >= threshold)
    return gray_decode(word) if code_kind == "gray" else word


def unwrap(wrapped, codes) -> np.ndarray:
    """Absolute phase ``phi' + 2 pi C`` with ``phi'`` remapped to [0, 2 pi)."""
    wrapped = np.asarray(wrapped, dtype=np.float64)
    codes = np.asarray(codes)
    if wrapped.shape != codes.shape:
        raise ValueError(f"wrapped phase {wrapped.shape} and codes {codes.shape} differ in shape")
    phi = np.where(wrapped < 0, wrapped + TWO_PI, wrapped)
    return phi + TWO_PI * codes


def _window_median(values: np.ndarray, radius: int, chunk_rows: int = 96) -> np.ndarray:
    """Median over the (2r+1)^2 window ignoring NaNs; NaN where the window is empty."""
    h, w = values.shape
    k = 2 * radius + 1
    padded = np.pad(values.astype(np.float64), radius, constant_values=np.nan)
    out = np.empty((h, w))
    for r0 in range(0, h, chunk_rows):
        r1 = min(h, r0 + chunk_rows)
        win = sliding_window_view(padded[r0 : r1 + 2 * radius], (k, k)).reshape(r1 - r0, w, k * k)
        win = np.sort(win, axis=-1)  # NaNs sort last
        n = np.sum(~np.isnan(win), axis=-1)
        lo = np.take_along_axis(win, np.maximum((n - 1) // 2, 0)[..., None], axis=-1)[..., 0]
        hi = np.take_along_axis(win, np.maximum(n // 2, 0)[..., None], axis=-1)[..., 0]
        med = 0.5 * (lo + hi)
        med[n == 0] = np.nan
        out[r0:r1] = med
    return out


def median_filter_codes(codes, valid=None, radius: int = 1) -> np.ndarray:
    """Median of valid codes over a (2r+1)^2 window; invalid pixels are left as they are."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    codes = np.asarray(codes)
    valid = np.ones(codes.shape, bool) if valid is None else np.asarray(valid, bool)
    med = _window_median(np.where(valid, codes, np.nan), radius)
    # a median of integers is integer or a half-integer; ties round down
    out = codes.copy()
    out[valid] = np.floor(med[valid]).astype(codes.dtype)
    return out


def correct_period_jumps(unwrapped, radius: int = 2, max_offset: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Snap isolated +/-2 pi fringe-order slips onto the local median.

    Code stripes and the phase wrap can disagree at sub-pixel offsets around
    every fringe boundary; those pixels come out exactly one period off.
    Returns the corrected map and a boolean map of pixels whose residual
    after correction is still larger than pi (or whose required shift
    exceeds ``max_offset`` periods); callers normally mask those.
    """
    delta = np.asarray(unwrapped, dtype=np.float64)
    med = _window_median(delta, radius)
    k = np.rint((med - delta) / TWO_PI)
    bad = np.isnan(med) | (np.abs(k) > max_offset)
    k = np.where(bad | np.isnan(k), 0.0, k)
    fixed = delta + TWO_PI * k
    bad |= np.abs(fixed - med) > np.pi
    bad &= ~np.isnan(delta)
    return fixed, bad


@dataclass
class CorrespondenceMap:
    """Continuous projector coordinates per camera pixel (NaN where invalid)."""

    xp: np.ndarray
    yp: np.ndarray
    valid: np.ndarray
    w_fringe_v: float
    w_fringe_h: float

    def floored(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer projector pixel map (-1 where invalid), for visualization."""
        fx = np.where(self.valid, np.floor(np.nan_to_num(self.xp)), -1).astype(np.int64)
        fy = np.where(self.valid, np.floor(np.nan_to_num(self.yp)), -1).astype(np.int64)
        return fx, fy


def correspondence(unwrapped_v, unwrapped_h, w_fringe_v, w_fringe_h, proj_size=None) -> CorrespondenceMap:
    """Map absolute phases to continuous projector coordinates.

    ``proj_size`` is ``(width, height)``; when given, out-of-frame
    coordinates are invalidated.
    """
    dv = np.asarray(unwrapped_v, dtype=np.float64)
    dh = np.asarray(unwrapped_h, dtype=np.float64)
    if dv.shape != dh.shape:
        raise ValueError(f"vertical {dv.shape} and horizontal {dh.shape} phase maps differ in shape")
    xp = w_fringe_v * dv / TWO_PI
    yp = w_fringe_h * dh / TWO_PI
    valid = np.isfinite(xp) & np.isfinite(yp) & (xp >= 0) & (yp >= 0)
    if proj_size is not None:
        valid &= (xp < proj_size[0]) & (yp < proj_size[1])
    xp = np.where(valid, xp, np.nan)
    yp = np.where(valid, yp, np.nan)
    return CorrespondenceMap(xp, yp, valid, float(w_fringe_v), float(w_fringe_h))


@dataclass
class OrientationDecode:
    wrapped: np.ndarray
    modulation: np.ndarray
    codes: np.ndarray
    unwrapped: np.ndarray
    valid: np.ndarray
    spec: PatternSpec
    n_jumps_fixed: int = 0


@dataclass
class DecodeOptions:
    m_min: float = DEFAULT_M_MIN
    median_filter: bool = False
    median_radius: int = 1
    fix_jumps: bool = True
    jump_radius: int = 2


def decode_orientation(sinusoids, code_planes, spec: PatternSpec, opts: Optional[DecodeOptions] = None) -> OrientationDecode:
    opts = opts or DecodeOptions()
    I1, I2, I3 = sinusoids
    phi = wrapped_phase(I1, I2, I3)
    M, valid = modulation_and_mask(I1, I2, I3, opts.m_min)
    valid &= ~np.isnan(phi)
    codes = decode_codewords(code_planes, threshold_map(I1, I2, I3), spec.code_kind)
    if opts.median_filter:
        codes = median_filter_codes(codes, valid, opts.median_radius)
    phi = np.where(valid, phi, np.nan)
    delta = unwrap(phi, codes)
    n_fixed = 0
    if opts.fix_jumps:
        fixed, bad = correct_period_jumps(delta, opts.jump_radius)
        n_fixed = int(np.sum(valid & ~bad & (fixed != delta)))
        valid &= ~bad
        delta = fixed
    valid &= (delta >= 0) & (delta < TWO_PI * spec.n_periods)
    delta = np.where(valid, delta, np.nan)
    return OrientationDecode(phi, M, codes, delta, valid, spec, n_fixed)


@dataclass
class DecodeResult:
    orientations: dict = field(default_factory=dict)
    correspondence: Optional[CorrespondenceMap] = None


def decode_stack(images: Sequence[np.ndarray], manifest: PatternManifest, opts: Optional[DecodeOptions] = None) -> DecodeResult:
    """Decode captures ordered like ``manifest.entries``."""
    if len(images) != len(manifest.entries):
        raise ValueError(f"stack has {len(images)} images but the manifest lists {len(manifest.entries)}")
    by_entry = dict(zip(manifest.entries, images))
    result = DecodeResult()
    for orientation, spec in manifest.specs.items():
        sins = [by_entry[e] for e in sorted(manifest.select(orientation, "sinusoid"), key=lambda e: e.index)]
        codes = [by_entry[e] for e in sorted(manifest.select(orientation, "code"), key=lambda e: e.index)]
        result.orientations[orientation] = decode_orientation(sins, codes, spec, opts)
    if VERTICAL in result.orientations and HORIZONTAL in result.orientations:
        v, h = result.orientations[VERTICAL], result.orientations[HORIZONTAL]
        result.correspondence = correspondence(
            v.unwrapped, h.unwrapped, v.spec.w_fringe, h.spec.w_fringe, (v.spec.proj_width, v.spec.proj_height)
        )
    return result
