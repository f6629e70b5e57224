"""Readers and writers for PGM / PFM rasters and ASCII PLY point clouds.

Rasters are plain numpy arrays:

* ``uint8`` of shape ``(H, W)`` -> binary PGM (``P5``, maxval 255)
* ``float32`` of shape ``(H, W)`` -> grayscale PFM (``Pf``)
* ``float32`` of shape ``(H, W, 3)`` -> colour PFM (``PF``), used for per-pixel point maps

Invalid float pixels are NaN and are always written with the canonical
quiet-NaN bit pattern ``0x7FC00000``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import FormatError, MalformedHeaderError, SizeOverflowError, TruncatedPayloadError

PathLike = Union[str, os.PathLike]

MAX_PIXELS = 1 << 28
QNAN_BITS = np.uint32(0x7FC00000)
SENTINEL = np.float32(np.nan)


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next whitespace-delimited header token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header")
    return buf[start:pos], pos


def _parse_dims(buf: bytes, pos: int) -> tuple[int, int, int]:
    dims = []
    for _ in range(2):
        tok, pos = _read_token(buf, pos)
        try:
            value = int(tok)
        except ValueError:
            raise MalformedHeaderError(f"bad dimension token {tok!r}") from None
        if value < 1:
            raise MalformedHeaderError(f"dimension must be >= 1, got {value}")
        dims.append(value)
    width, height = dims
    if width * height > MAX_PIXELS:
        raise SizeOverflowError(f"{width}x{height} exceeds {MAX_PIXELS} pixels")
    return width, height, pos


def _end_of_header(buf: bytes, pos: int) -> int:
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after header")
    return pos + 1


def decode_pgm(buf: bytes) -> np.ndarray:
    tok, pos = _read_token(buf, 0)
    if tok != b"P5":
        raise MalformedHeaderError(f"not a binary PGM (magic {tok!r})")
    width, height, pos = _parse_dims(buf, pos)
    tok, pos = _read_token(buf, pos)
    if tok != b"255":
        raise MalformedHeaderError(f"only maxval 255 is supported, got {tok!r}")
    pos = _end_of_header(buf, pos)
    payload = buf[pos:]
    if len(payload) < width * height:
        raise TruncatedPayloadError(f"expected {width * height} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=width * height).reshape(height, width).copy()


def decode_pfm(buf: bytes) -> np.ndarray:
    tok, pos = _read_token(buf, 0)
    if tok == b"Pf":
        channels = 1
    elif tok == b"PF":
        channels = 3
    else:
        raise MalformedHeaderError(f"not a PFM (magic {tok!r})")
    width, height, pos = _parse_dims(buf, pos)
    tok, pos = _read_token(buf, pos)
    try:
        scale = float(tok)
    except ValueError:
        raise MalformedHeaderError(f"bad PFM scale {tok!r}") from None
    if scale == 0.0 or not np.isfinite(scale):
        raise MalformedHeaderError(f"bad PFM scale {scale}")
    pos = _end_of_header(buf, pos)
    count = width * height * channels
    payload = buf[pos:]
    if len(payload) < 4 * count:
        raise TruncatedPayloadError(f"expected {4 * count} bytes, found {len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return data.reshape(shape)[::-1].copy()


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise FormatError(f"gray8 image must be a non-empty 2D array, got shape {image.shape}")
    if image.dtype != np.uint8:
        if np.issubdtype(image.dtype, np.integer) and image.min() >= 0 and image.max() <= 255:
            image = image.astype(np.uint8)
        else:
            raise FormatError(f"gray8 image must hold integers in [0, 255], got {image.dtype}")
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def encode_pfm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim == 2:
        magic = "Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = "PF"
    else:
        raise FormatError(f"PFM image must be (H, W) or (H, W, 3), got {image.shape}")
    if image.size == 0:
        raise FormatError("empty image")
    data = np.array(image, dtype=np.float32)
    if np.isinf(data).any():
        raise FormatError("gray-real images must be finite or NaN (invalid)")
    bits = data.view(np.uint32)
    bits[np.isnan(data)] = QNAN_BITS
    h, w = data.shape[:2]
    header = f"{magic}\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(data[::-1]).astype("<f4").tobytes()


def read_image(path: PathLike) -> np.ndarray:
    """Read a PGM (uint8) or PFM (float32) file, dispatching on the magic number."""
    buf = Path(path).read_bytes()
    if buf[:2] == b"P5":
        return decode_pgm(buf)
    if buf[:2] in (b"Pf", b"PF"):
        return decode_pfm(buf)
    raise MalformedHeaderError(f"{path}: unknown raster magic {buf[:2]!r}")


def write_image(image: np.ndarray, path: PathLike) -> None:
    """Write ``image`` as PGM if it is uint8, else as PFM."""
    image = np.asarray(image)
    data = encode_pgm(image) if image.dtype == np.uint8 else encode_pfm(image)
    Path(path).write_bytes(data)


@dataclass
class PointCloud:
    """Triangulated points in meters, optionally tagged with their camera pixel."""

    points: np.ndarray
    pixels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise ValueError("point cloud coordinates must be finite")
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
            if len(self.pixels) != len(self.points):
                raise ValueError("pixels and points differ in length")

    def __len__(self) -> int:
        return len(self.points)


def write_ply(cloud: PointCloud, path: PathLike) -> None:
    """Write an ASCII PLY 1.0 file. Values are written with full round-trip precision."""
    props = ["x", "y", "z"]
    cols = cloud.points
    if cloud.pixels is not None:
        props += ["xc", "yc"]
        cols = np.hstack([cloud.points, cloud.pixels])
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    lines += [f"property double {p}" for p in props]
    lines.append("end_header")
    body = [" ".join(repr(float(v)) for v in row) for row in cols]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines + body) + "\n")


def read_ply(path: PathLike) -> PointCloud:
    """Read an ASCII PLY written by :func:`write_ply` (or any x/y/z vertex-only file)."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != "ply":
        raise MalformedHeaderError("missing 'ply' magic line")
    n_vertex = None
    props: list[str] = []
    i = 1
    while i < len(text) and text[i].strip() != "end_header":
        parts = text[i].split()
        if parts[:1] == ["format"] and parts[1:2] != ["ascii"]:
            raise MalformedHeaderError("only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            n_vertex = int(parts[2])
        elif parts[:1] == ["property"] and n_vertex is not None:
            props.append(parts[-1])
        i += 1
    if i == len(text) or n_vertex is None:
        raise MalformedHeaderError("incomplete PLY header")
    rows = text[i + 1 : i + 1 + n_vertex]
    if len(rows) < n_vertex:
        raise TruncatedPayloadError(f"expected {n_vertex} vertices, found {len(rows)}")
    data = np.array([[float(v) for v in r.split()] for r in rows], dtype=np.float64).reshape(n_vertex, len(props))
    col = {name: k for k, name in enumerate(props)}
    try:
        points = data[:, [col["x"], col["y"], col["z"]]]
    except KeyError:
        raise MalformedHeaderError("PLY lacks x/y/z properties") from None
    pixels = data[:, [col["xc"], col["yc"]]] if "xc" in col and "yc" in col else None
    return PointCloud(points, pixels)
