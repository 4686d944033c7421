"""Sample-directory protocol: parsing, validation, prediction writing.

Depth files are raw little-endian float32 with a 16-byte header (magic
``DPT1``, uint32 width, uint32 height, uint32 reserved); 0 encodes "no
depth". Mask PNGs store known pixels as 255. ``request.json`` carries the
mode ("completion" or "monocular"); a batch ``manifest.json`` lists sample
directories with their modes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DPT_MAGIC = b"DPT1"
_HEADER = struct.Struct("<4sIII")


class ProtocolError(Exception):
    """Malformed sample input or invalid prediction output."""


def read_depth(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ProtocolError(f"{path}: truncated depth header")
    magic, width, height, _ = _HEADER.unpack_from(raw)
    if magic != DPT_MAGIC:
        raise ProtocolError(f"{path}: bad depth magic {magic!r}")
    if len(raw) != _HEADER.size + 4 * width * height:
        raise ProtocolError(f"{path}: depth payload does not match {width}x{height}")
    vals = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return vals.reshape(height, width).astype(np.float64)


def write_depth(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    header = _HEADER.pack(DPT_MAGIC, values.shape[1], values.shape[0], 0)
    Path(path).write_bytes(header + values.astype("<f4").tobytes())


def read_mask(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) != 0


def read_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


@dataclass(frozen=True)
class Sample:
    directory: Path
    mode: str
    image: np.ndarray
    sparse: np.ndarray
    known: np.ndarray
    intrinsics: dict


def load_sample(directory) -> Sample:
    """Read and cross-validate one request directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ProtocolError(f"sample directory not found: {directory}")
    try:
        request = json.loads((directory / "request.json").read_text())
        intrinsics = json.loads((directory / "intrinsics.json").read_text())
        image = read_image(directory / "image.png")
        sparse = read_depth(directory / "sparse.dpt")
        known = read_mask(directory / "mask.png")
    except FileNotFoundError as exc:
        raise ProtocolError(f"missing request file: {exc.filename}") from exc
    except (json.JSONDecodeError, OSError) as exc:
        raise ProtocolError(f"unreadable request file in {directory}: {exc}") from exc
    mode = request.get("mode")
    if mode not in ("completion", "monocular"):
        raise ProtocolError(f"unknown request mode {mode!r}")
    shape = (int(intrinsics["height"]), int(intrinsics["width"]))
    if image.shape[:2] != shape or sparse.shape != shape or known.shape != shape:
        raise ProtocolError(
            f"raster shapes disagree with intrinsics {shape}: "
            f"image {image.shape[:2]}, sparse {sparse.shape}, mask {known.shape}"
        )
    if not np.array_equal(known, sparse > 0):
        raise ProtocolError("mask.png does not match the sparse-depth validity pattern")
    return Sample(directory, mode, image, sparse, known, intrinsics)


def validate_prediction(sample: Sample, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != sample.sparse.shape:
        raise ProtocolError(
            f"prediction shape {values.shape} does not match request {sample.sparse.shape}"
        )
    if not np.isfinite(values).all():
        raise ProtocolError("prediction contains non-finite values")
    if (values <= 0).any():
        raise ProtocolError("prediction must be dense (every pixel > 0)")
    return values


def write_prediction(sample: Sample, values: np.ndarray) -> Path:
    """Validate, then write pred.dpt; nothing is written on invalid output."""
    values = validate_prediction(sample, values)
    out = sample.directory / "pred.dpt"
    write_depth(out, values)
    return out


def iter_manifest(path) -> list[tuple[Path, str]]:
    """Sample directories and modes listed by a batch manifest."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"unreadable manifest {path}: {exc}") from exc
    entries = data.get("samples")
    if not isinstance(entries, list):
        raise ProtocolError(f"{path}: manifest has no sample list")
    return [(Path(e["dir"]), str(e.get("mode", "completion"))) for e in entries]
