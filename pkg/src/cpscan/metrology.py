"""Length-based accuracy and repeatability evaluation plus plane diagnostics.

Accuracy is the mean absolute relative error of measured lengths, in
percent. Precision is, for each length, the mean absolute relative
deviation of its repeated samples from their own mean, averaged over
lengths, in percent.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class LengthSpec:
    name: str
    start: str
    end: str
    actual: float

    def __post_init__(self):
        if not self.actual > 0:
            raise ValueError(f"length {self.name!r}: actual value must be positive")


@dataclass
class MeasurementPlan:
    """Named camera-pixel feature points and the lengths defined between them."""

    points: dict
    lengths: list

    def __post_init__(self):
        self.points = {k: (float(v[0]), float(v[1])) for k, v in self.points.items()}
        for spec in self.lengths:
            for p in (spec.start, spec.end):
                if p not in self.points:
                    raise ValueError(f"length {spec.name!r} references undefined point {p!r}")

    def to_dict(self) -> dict:
        return {
            "points": {k: list(v) for k, v in self.points.items()},
            "lengths": [{"name": s.name, "from": s.start, "to": s.end, "actual_m": s.actual} for s in self.lengths],
        }


@dataclass
class LengthSample:
    name: str
    actual: float
    measured: list = field(default_factory=list)


def point_at_pixel(point_map: np.ndarray, pixel, window: int = 1) -> np.ndarray:
    """3D point at a real-valued camera pixel ``(u, v)`` of an (H, W, 3) map.

    Bilinear when all four neighbours are valid; otherwise the mean of the
    valid entries in the (2*window+1)^2 block around the nearest pixel.
    """
    pm = np.asarray(point_map, dtype=float)
    h, w = pm.shape[:2]
    u, v = float(pixel[0]), float(pixel[1])
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        raise ValueError(f"pixel ({u}, {v}) outside the {w}x{h} map")
    u0 = min(int(np.floor(u)), w - 2) if w > 1 else 0
    v0 = min(int(np.floor(v)), h - 2) if h > 1 else 0
    fu, fv = u - u0, v - v0
    quad = pm[v0 : v0 + 2, u0 : u0 + 2]
    if quad.shape[:2] == (2, 2) and np.isfinite(quad).all():
        top = quad[0, 0] * (1 - fu) + quad[0, 1] * fu
        bot = quad[1, 0] * (1 - fu) + quad[1, 1] * fu
        return top * (1 - fv) + bot * fv
    uc, vc = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
    block = pm[max(vc - window, 0) : vc + window + 1, max(uc - window, 0) : uc + window + 1].reshape(-1, 3)
    good = np.isfinite(block).all(axis=1)
    if not good.any():
        raise NumericalError(f"no valid map entries near pixel ({u}, {v})")
    return block[good].mean(axis=0)


def accuracy_metric(pairs) -> float:
    """Mean of ``|actual - measured| / actual * 100`` over ``(actual, measured)`` pairs."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("accuracy needs at least one measurement")
    actual, measured = pairs[:, 0], pairs[:, 1]
    if np.any(actual <= 0):
        raise ValueError("actual lengths must be positive")
    return float(np.mean(np.abs(actual - measured) / actual * 100.0))


def precision_metric(samples: Sequence[Sequence[float]]) -> float:
    """Per-length mean % deviation from the length's sample mean, averaged over lengths."""
    if len(samples) == 0:
        raise ValueError("precision needs at least one length")
    per_length = []
    for s in samples:
        s = np.asarray(s, dtype=float)
        if s.size == 0:
            raise ValueError("every length needs at least one sample")
        mean = s.mean()
        if mean == 0:
            raise ValueError("sample mean is zero")
        if s.min() == s.max():
            # the float mean of equal samples can miss them by an ulp
            per_length.append(0.0)
            continue
        per_length.append(np.mean(np.abs(mean - s) / abs(mean) * 100.0))
    return float(np.mean(per_length))


def measure_plan(point_map: np.ndarray, plan: MeasurementPlan, window: int = 1) -> dict:
    """Measured length (m) for every length of ``plan``, keyed by name."""
    pts = {name: point_at_pixel(point_map, px, window) for name, px in plan.points.items()}
    return {s.name: float(np.linalg.norm(pts[s.start] - pts[s.end])) for s in plan.lengths}


def fit_plane(points) -> tuple[np.ndarray, float, float]:
    """Total-least-squares plane ``n . x = offset``; returns ``(n, offset, rms)``."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) < 3:
        raise NumericalError("plane fit needs at least 3 points")
    c = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c, full_matrices=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise NumericalError("points are collinear; plane is undetermined")
    n = Vt[2]
    dist = (P - c) @ n
    return n, float(n @ c), float(np.sqrt(np.mean(dist**2)))


def plane_residuals(points, normal, offset) -> np.ndarray:
    return np.asarray(points, dtype=float) @ normal - offset


def waviness(xp, residuals, min_periods: int = 4, expected_period: Optional[float] = None) -> tuple[float, float]:
    """Dominant period (projector px) and amplitude (m) of residuals vs projector column.

    Residuals are averaged in 1-px bins of ``xp``; empty bins are filled by
    linear interpolation. ``expected_period``, when given, sets the minimum
    span to ``min_periods`` of it; otherwise at least 16 bins are required.
    """
    xp = np.asarray(xp, dtype=float).ravel()
    r = np.asarray(residuals, dtype=float).ravel()
    good = np.isfinite(xp) & np.isfinite(r)
    xp, r = xp[good], r[good]
    if xp.size == 0:
        raise ValueError("no residual samples")
    lo = np.floor(xp.min())
    idx = (np.floor(xp) - lo).astype(np.int64)
    n_bins = int(idx.max()) + 1
    need = min_periods * expected_period if expected_period else 16
    if n_bins < need:
        raise ValueError(f"residuals span {n_bins} px; need at least {need}")
    sums = np.bincount(idx, weights=r, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    filled = counts > 0
    centers = np.arange(n_bins)
    means = np.interp(centers, centers[filled], sums[filled] / counts[filled])
    spectrum = np.fft.rfft(means)
    mag = np.abs(spectrum)
    k = int(np.argmax(mag[1:]) + 1)
    amplitude = 2.0 * mag[k] / n_bins
    if amplitude == 0.0:
        return float("inf"), 0.0
    return n_bins / k, float(amplitude)


def surface_diagnostics(point_map, xp_map, expected_period: Optional[float] = None) -> tuple[float, float, float]:
    """Plane-fit RMS (m) of a flat-target point map and the waviness of its residuals.

    Returns ``(rms, period_px, amplitude_m)``; residuals are ordered by the
    continuous projector column in ``xp_map``.
    """
    pm = np.asarray(point_map, dtype=float)
    xp = np.asarray(xp_map, dtype=float)
    good = np.isfinite(pm).all(axis=-1) & np.isfinite(xp)
    P = pm[good]
    n, offset, rms = fit_plane(P)
    period, amp = waviness(xp[good], plane_residuals(P, n, offset), expected_period=expected_period)
    return rms, period, amp


@dataclass
class EvaluationReport:
    accuracy_percent: Optional[float]
    precision_percent: Optional[float]
    lengths: list  # per-length dicts
    n_measurements: int
    vp: int
    vs: list
    plane_rms_m: Optional[float] = None
    waviness_period_px: Optional[float] = None
    waviness_amplitude_m: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_tsv(self) -> str:
        rows = ["name\tactual_m\tmean_measured_m\tabs_rel_error_percent\tn_samples"]
        for d in self.lengths:
            rows.append(f"{d['name']}\t{d['actual_m']:.9g}\t{d['mean_measured_m']:.9g}\t{d['abs_rel_error_percent']:.6g}\t{d['n_samples']}")
        return "\n".join(rows) + "\n"


def evaluate(
    point_maps: Sequence[np.ndarray],
    plan: MeasurementPlan,
    window: int = 1,
    xp_map: Optional[np.ndarray] = None,
    expected_period: Optional[float] = None,
) -> EvaluationReport:
    """Accuracy over every (length, scan) measurement and precision across scans.

    When ``xp_map`` (projector columns of the first scan) is given, the
    plane RMS and waviness diagnostics of the first map are filled in too.
    """
    if not point_maps:
        raise ValueError("no point maps to evaluate")
    measured = [measure_plan(pm, plan, window) for pm in point_maps]
    samples = {s.name: [m[s.name] for m in measured] for s in plan.lengths}
    pairs = [(s.actual, v) for s in plan.lengths for v in samples[s.name]]
    breakdown = []
    for s in plan.lengths:
        vals = np.asarray(samples[s.name])
        breakdown.append(
            {
                "name": s.name,
                "actual_m": s.actual,
                "measured_m": vals.tolist(),
                "mean_measured_m": float(vals.mean()),
                "abs_rel_error_percent": accuracy_metric([(s.actual, v) for v in vals]),
                "n_samples": int(vals.size),
            }
        )
    diag = (None, None, None)
    if xp_map is not None:
        diag = surface_diagnostics(point_maps[0], xp_map, expected_period)
    return EvaluationReport(
        accuracy_percent=accuracy_metric(pairs),
        precision_percent=precision_metric([samples[s.name] for s in plan.lengths]),
        lengths=breakdown,
        n_measurements=len(pairs),
        vp=len(plan.lengths),
        vs=[len(samples[s.name]) for s in plan.lengths],
        plane_rms_m=diag[0],
        waviness_period_px=diag[1],
        waviness_amplitude_m=diag[2],
    )
