"""Raster containers (depth, mask, color) and their file formats.

Mask polarity: ``True`` marks pixels where the named condition holds. For
depth masks that condition is "depth present" (value > 0); a hole mask is
simply the complement. Mask PNGs store True as 255 and False as 0.

Depth file formats:

- raw (``.dpt``): little-endian float32, 16-byte header
  (magic ``b"DPT1"``, uint32 width, uint32 height, uint32 reserved) followed
  by row-major values in meters. Lossless at float32 granularity.
- 16-bit PNG (``.png``): grayscale millimeters, 0 = no depth, clamped at
  65.535 m. Worst-case quantization error is 0.5 mm.

The invalid-depth sentinel is 0.0 everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DPT_MAGIC = b"DPT1"
_DPT_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class DepthMap:
    """Dense or sparse metric depth; 0.0 means "no depth"."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValueError("depth values must be finite")
        if (vals < 0).any():
            raise ValueError("depth values must be >= 0")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Mask:
    """Binary per-pixel validity grid; True = condition holds."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=bool)
        if vals.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ColorImage:
    """8-bit RGB image, shape (H, W, 3)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.uint8)
        if vals.ndim != 3 or vals.shape[2] != 3:
            raise ValueError(f"color image must have shape (H, W, 3), got {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _infer_depth_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".dpt":
        return "dpt"
    if suffix == ".png":
        return "png16"
    raise ValueError(f"cannot infer depth format from suffix {suffix!r}")


def save_depth(depth: DepthMap, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or _infer_depth_format(path)
    if fmt == "dpt":
        header = _DPT_HEADER.pack(DPT_MAGIC, depth.width, depth.height, 0)
        payload = depth.values.astype("<f4").tobytes()
        path.write_bytes(header + payload)
    elif fmt == "png16":
        mm = np.clip(np.round(depth.values * 1000.0), 0, 65535).astype(np.uint16)
        Image.fromarray(mm).save(path)
    else:
        raise ValueError(f"unknown depth format {fmt!r}")


def load_depth(path, fmt: str | None = None) -> DepthMap:
    path = Path(path)
    fmt = fmt or _infer_depth_format(path)
    if fmt == "dpt":
        raw = path.read_bytes()
        if len(raw) < _DPT_HEADER.size:
            raise ValueError(f"{path}: truncated depth header")
        magic, width, height, _ = _DPT_HEADER.unpack_from(raw)
        if magic != DPT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        expected = _DPT_HEADER.size + 4 * width * height
        if len(raw) != expected:
            raise ValueError(
                f"{path}: payload size mismatch ({len(raw)} bytes for {width}x{height})"
            )
        vals = np.frombuffer(raw, dtype="<f4", offset=_DPT_HEADER.size)
        return DepthMap(vals.reshape(height, width).astype(np.float64))
    if fmt == "png16":
        arr = np.asarray(Image.open(path))
        if arr.ndim != 2:
            raise ValueError(f"{path}: depth PNG must be single-channel")
        return DepthMap(arr.astype(np.float64) / 1000.0)
    raise ValueError(f"unknown depth format {fmt!r}")


def save_mask(mask: Mask, path) -> None:
    Image.fromarray(np.where(mask.values, 255, 0).astype(np.uint8)).save(path)


def load_mask(path) -> Mask:
    arr = np.asarray(Image.open(path).convert("L"))
    return Mask(arr != 0)


def save_color(image: ColorImage, path) -> None:
    Image.fromarray(image.values, mode="RGB").save(path)


def load_color(path) -> ColorImage:
    return ColorImage(np.asarray(Image.open(path).convert("RGB")))


def mask_of(depth: DepthMap) -> Mask:
    """The validity mask: True exactly where depth is present (> 0)."""
    return Mask(depth.values > 0)


def gradient_magnitude(depth: DepthMap) -> np.ndarray:
    """Per-pixel depth gradient magnitude of a dense map.

    Forward differences in x and y, backward difference on the last
    column/row; the magnitude is the max of the two absolute components.
    """
    v = depth.values
    if (v == 0).any():
        raise ValueError("gradient requires dense depth (no invalid pixels)")
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    if v.shape[1] >= 2:
        gx[:, :-1] = v[:, 1:] - v[:, :-1]
        gx[:, -1] = v[:, -1] - v[:, -2]
    if v.shape[0] >= 2:
        gy[:-1, :] = v[1:, :] - v[:-1, :]
        gy[-1, :] = v[-1, :] - v[-2, :]
    return np.maximum(np.abs(gx), np.abs(gy))


def resize_mask_nearest(mask: Mask, width: int, height: int) -> Mask:
    """Nearest-neighbor resize; keeps the mask strictly binary."""
    if (mask.width, mask.height) == (width, height):
        return Mask(mask.values)
    ys = (np.arange(height, dtype=np.int64) * mask.height) // height
    xs = (np.arange(width, dtype=np.int64) * mask.width) // width
    return Mask(mask.values[np.ix_(ys, xs)])


def nearest_valid_indices(valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every pixel, the (row, col) of the nearest True pixel.

    Exact Euclidean metric on integer pixel coordinates. Among equidistant
    candidates the one earliest in scanline (row-major) order wins, which
    makes the result fully deterministic. Used for nearest-neighbor depth
    fill and for snapping high-gradient pixels.
    """
    valid = np.asarray(valid, dtype=bool)
    if valid.ndim != 2:
        raise ValueError("valid mask must be 2-D")
    h, w = valid.shape
    if not valid.any():
        raise ValueError("no valid pixels to pull values from")
    # Packed int64 keys need d^2 < 2^31 and indices < 2^16.
    if h >= 65536 or w >= 65536 or (h - 1) ** 2 + (w - 1) ** 2 >= 2**31:
        raise ValueError(f"image too large for feature transform: {h}x{w}")

    # Pass 1: per column, the nearest True row for every row (tie: smaller row).
    ys = np.arange(h, dtype=np.int64)
    col_ids = np.flatnonzero(valid.any(axis=0)).astype(np.int64)
    best_row = np.empty((h, col_ids.size), dtype=np.int64)
    for j, x in enumerate(col_ids):
        rs = np.flatnonzero(valid[:, x]).astype(np.int64)
        pos = np.searchsorted(rs, ys)
        lo = rs[np.clip(pos - 1, 0, rs.size - 1)]
        hi = rs[np.clip(pos, 0, rs.size - 1)]
        best_row[:, j] = np.where(np.abs(ys - lo) <= np.abs(hi - ys), lo, hi)
    dy2 = (ys[:, None] - best_row) ** 2

    # Pass 2: per row, pick the best column candidate with an exact integer
    # key ordering by (squared distance, candidate row, candidate col).
    dx2 = (np.arange(w, dtype=np.int64)[:, None] - col_ids[None, :]) ** 2
    tie_key = (best_row << 16) + col_ids[None, :]
    rows_out = np.empty((h, w), dtype=np.int64)
    cols_out = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        key = ((dx2 + dy2[y][None, :]) << 32) + tie_key[y][None, :]
        j = np.argmin(key, axis=1)
        rows_out[y] = best_row[y, j]
        cols_out[y] = col_ids[j]
    return rows_out, cols_out
