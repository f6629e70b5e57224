"""Three-step phase-shifted fringes and Gray/binary code bit-planes.

The period index of a projector pixel is ``floor(x / w_fringe)`` and each
code stripe is exactly one fringe wide, so the decoded code counts whole
fringes and the wrapped phase supplies the position inside the fringe.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import raster_io

PHASE_STEP = 2.0 * np.pi / 3.0
VERTICAL = "vertical"
HORIZONTAL = "horizontal"
ORIENTATIONS = (VERTICAL, HORIZONTAL)
CODE_KINDS = ("gray", "binary")


def gray_encode(n):
    """Binary-reflected Gray code. Works on ints and integer arrays."""
    return n ^ (n >> 1)


def gray_decode(g):
    """Inverse of :func:`gray_encode` for values below 2**31."""
    n = g
    for shift in (1, 2, 4, 8, 16):
        n = n ^ (n >> shift)
    return n


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class PatternSpec:
    proj_width: int = 1024
    proj_height: int = 768
    w_fringe: int = 64
    orientation: str = VERTICAL
    i_dc: float = 127.5
    i_mod: float = 127.5
    code_kind: str = "gray"

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")
        if self.code_kind not in CODE_KINDS:
            raise ValueError(f"code_kind must be one of {CODE_KINDS}, got {self.code_kind!r}")
        if self.proj_width < 1 or self.proj_height < 1:
            raise ValueError("projector dimensions must be positive")
        if int(self.w_fringe) != self.w_fringe or self.w_fringe < 4:
            raise ValueError(f"w_fringe must be an integer >= 4, got {self.w_fringe}")
        if self.i_mod < 0 or self.i_dc - self.i_mod < 0 or self.i_dc + self.i_mod > 255:
            raise ValueError(f"I_dc +/- I_mod must stay within [0, 255] (I_dc={self.i_dc}, I_mod={self.i_mod})")
        ext = self.extent
        if ext % self.w_fringe:
            raise ValueError(
                f"projector extent {ext} is not divisible by w_fringe {self.w_fringe}; "
                f"valid widths: {valid_fringe_widths(ext)}"
            )
        if not _is_power_of_two(ext // self.w_fringe):
            raise ValueError(
                f"period count {ext // self.w_fringe} ({ext}/{self.w_fringe}) is not a power of two; "
                f"valid widths: {valid_fringe_widths(ext)}"
            )

    @property
    def extent(self) -> int:
        """Number of projector pixels along the phase-varying axis."""
        return self.proj_width if self.orientation == VERTICAL else self.proj_height

    @property
    def n_periods(self) -> int:
        return self.extent // self.w_fringe

    @property
    def n_bits(self) -> int:
        return int(math.log2(self.n_periods))

    def coordinate_grid(self) -> np.ndarray:
        """Projector coordinate along the phase axis, broadcast to (H, W)."""
        shape = (self.proj_height, self.proj_width)
        if self.orientation == VERTICAL:
            return np.broadcast_to(np.arange(self.proj_width, dtype=float)[None, :], shape)
        return np.broadcast_to(np.arange(self.proj_height, dtype=float)[:, None], shape)

    def period_index(self) -> np.ndarray:
        return (self.coordinate_grid() // self.w_fringe).astype(np.int64)


def valid_fringe_widths(extent: int, minimum: int = 4) -> list[int]:
    return [w for w in range(minimum, extent + 1) if extent % w == 0 and _is_power_of_two(extent // w)]


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def sinusoid_values(spec: PatternSpec, x) -> list[np.ndarray]:
    """Unquantized I1, I2, I3 at projector coordinate(s) ``x``.

    I1 carries the -2pi/3 shift and I3 the +2pi/3 shift, so that the
    arctangent estimator in :mod:`cpscan.decode` returns +phi.
    """
    # reduce first so every period quantizes identically
    phi = 2.0 * np.pi * np.mod(np.asarray(x, dtype=float), spec.w_fringe) / spec.w_fringe
    return [spec.i_dc + spec.i_mod * np.cos(phi + s) for s in (-PHASE_STEP, 0.0, PHASE_STEP)]


def generate_sinusoids(spec: PatternSpec) -> list[np.ndarray]:
    return [_quantize(v) for v in sinusoid_values(spec, spec.coordinate_grid())]


def codewords(spec: PatternSpec, periods) -> np.ndarray:
    periods = np.asarray(periods, dtype=np.int64)
    return gray_encode(periods) if spec.code_kind == "gray" else periods


def generate_code_planes(spec: PatternSpec) -> list[np.ndarray]:
    """Bit-planes, most significant first; 255 where the bit is set."""
    words = codewords(spec, spec.period_index())
    planes = []
    for b in range(spec.n_bits - 1, -1, -1):
        planes.append(np.where((words >> b) & 1, 255, 0).astype(np.uint8))
    return planes


@dataclass
class PatternSet:
    sinusoids: list
    code_planes: list
    spec: PatternSpec

    @classmethod
    def generate(cls, spec: PatternSpec) -> "PatternSet":
        return cls(generate_sinusoids(spec), generate_code_planes(spec), spec)


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    role: str  # "sinusoid" or "code"
    orientation: str
    index: int


@dataclass
class PatternManifest:
    """Ordered capture plan: vertical sinusoids, vertical codes, then horizontal."""

    entries: list
    specs: dict  # orientation -> PatternSpec

    def select(self, orientation: str, role: str) -> list:
        return [e for e in self.entries if e.orientation == orientation and e.role == role]

    def to_dict(self) -> dict:
        return {
            "images": [asdict(e) for e in self.entries],
            "spec": {o: asdict(s) for o, s in self.specs.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PatternManifest":
        try:
            specs = {o: PatternSpec(**s) for o, s in doc["spec"].items()}
            entries = [ManifestEntry(**e) for e in doc["images"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed pattern manifest: {exc}") from None
        for o in specs:
            if specs[o].orientation != o:
                raise ValueError(f"manifest spec key {o!r} disagrees with its orientation")
        for e in entries:
            if e.orientation not in specs:
                raise ValueError(f"manifest image {e.file} has no spec for {e.orientation!r}")
        for o, s in specs.items():
            if len([e for e in entries if e.orientation == o and e.role == "sinusoid"]) != 3:
                raise ValueError(f"manifest needs 3 sinusoids for {o}")
            if len([e for e in entries if e.orientation == o and e.role == "code"]) != s.n_bits:
                raise ValueError(f"manifest needs {s.n_bits} code planes for {o}")
        return cls(entries, specs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PatternManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class PatternStack:
    manifest: PatternManifest
    images: list  # aligned with manifest.entries

    def __iter__(self):
        return iter(zip(self.manifest.entries, self.images))

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for entry, img in self:
            raster_io.write_image(img, out / entry.file)
        path = out / "manifest.json"
        self.manifest.save(path)
        return path


def full_pattern_stack(spec_v: Optional[PatternSpec], spec_h: Optional[PatternSpec]) -> PatternStack:
    """Build the projection sequence for one or both orientations."""
    specs = {}
    if spec_v is not None:
        if spec_v.orientation != VERTICAL:
            raise ValueError("spec_v must have vertical orientation")
        specs[VERTICAL] = spec_v
    if spec_h is not None:
        if spec_h.orientation != HORIZONTAL:
            raise ValueError("spec_h must have horizontal orientation")
        specs[HORIZONTAL] = spec_h
    if not specs:
        raise ValueError("at least one orientation is required")
    if spec_v is not None and spec_h is not None:
        if (spec_v.proj_width, spec_v.proj_height) != (spec_h.proj_width, spec_h.proj_height):
            raise ValueError("vertical and horizontal specs disagree on projector dimensions")

    entries, images = [], []
    for orientation, spec in specs.items():
        tag = orientation[0]
        for i, img in enumerate(generate_sinusoids(spec)):
            entries.append(ManifestEntry(f"{tag}_sin_{i}.pgm", "sinusoid", orientation, i))
            images.append(img)
        for i, img in enumerate(generate_code_planes(spec)):
            entries.append(ManifestEntry(f"{tag}_code_{i}.pgm", "code", orientation, i))
            images.append(img)
    return PatternStack(PatternManifest(entries, specs), images)
