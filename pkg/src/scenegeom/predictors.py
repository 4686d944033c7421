"""Depth-completion predictors: built-in baselines and the external protocol.

A predictor maps (image, sparse depth, known mask, intrinsics) to a dense
depth map; every response is validated centrally (matching shape, all
values finite and > 0) so downstream code never sees malformed predictions.

External models plug in through a file protocol. For each request the
harness writes a fresh sample directory::

    image.png        8-bit RGB input view
    sparse.dpt       sparse depth, 0 = no depth
    mask.png         known mask, 255 where sparse depth is present
    intrinsics.json  {"fx", "fy", "cx", "cy", "width", "height"}
    request.json     {"mode": "completion"|"monocular", "sample_id", "dataset"}

and invokes the adapter command with the directory path as its single
argument. The adapter writes ``pred.dpt`` (dense float32 depth) into the
same directory. Monocular mode is signalled by an all-zero sparse map and
all-False mask, so one protocol serves completion models, teachers, and
plain monocular estimators alike.

Adapters can advertise capabilities in an ``adapter.json`` next to their
executable: ``{"manifest_mode": bool, "stateless": bool}``. With manifest
mode the harness writes many sample directories plus a ``manifest.json``
(``{"samples": [{"dir", "mode"}, ...]}``) and invokes the adapter once with
the manifest path, letting heavyweight models load a single time.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from scenegeom.alignment import AlignConfig, align_closed_form, align_iterative
from scenegeom.geometry import Intrinsics
from scenegeom.rasters import (
    ColorImage,
    DepthMap,
    Mask,
    load_depth,
    nearest_valid_indices,
    save_color,
    save_depth,
    save_mask,
)

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-6  # clamp floor for aligned predictions, meters


class PredictorError(Exception):
    """Base class for predictor and protocol failures."""


class AdapterProcessError(PredictorError):
    """The adapter process failed (nonzero exit status)."""

    def __init__(self, command, returncode, stderr: str):
        self.command = list(command)
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(
            f"adapter {self.command} exited with status {returncode}: {stderr.strip()}"
        )


class AdapterTimeoutError(AdapterProcessError):
    """The adapter did not finish within the configured timeout."""

    def __init__(self, command, timeout: float):
        self.command = list(command)
        self.returncode = None
        self.stderr = ""
        PredictorError.__init__(self, f"adapter {self.command} timed out after {timeout} s")


class MissingPredictionError(PredictorError):
    """The adapter exited cleanly but produced no readable pred.dpt."""


class ResponseShapeError(PredictorError):
    """Prediction dimensions do not match the request."""


class ResponseDensityError(PredictorError):
    """Prediction contains non-positive or non-finite values."""


@dataclass(frozen=True)
class PredictRequest:
    image: ColorImage
    sparse: DepthMap
    known: Mask
    intrinsics: Intrinsics

    def __post_init__(self):
        shape = (self.intrinsics.height, self.intrinsics.width)
        for name, raster in (("image", self.image), ("sparse", self.sparse), ("known", self.known)):
            if (raster.height, raster.width) != shape:
                raise ValueError(f"{name} shape does not match intrinsics resolution {shape}")
        if not np.array_equal(self.known.values, self.sparse.values > 0):
            raise ValueError("known mask must equal the sparse-depth validity mask")

    @property
    def is_monocular(self) -> bool:
        return not self.known.values.any()

    @staticmethod
    def monocular(image: ColorImage, intrinsics: Intrinsics) -> "PredictRequest":
        """A request with no sparse depth at all (pure depth estimation)."""
        shape = (intrinsics.height, intrinsics.width)
        return PredictRequest(
            image, DepthMap(np.zeros(shape)), Mask(np.zeros(shape, bool)), intrinsics
        )


@dataclass(frozen=True)
class PredictResponse:
    depth: DepthMap


def _validated_response(req: PredictRequest, values: np.ndarray) -> PredictResponse:
    shape = (req.intrinsics.height, req.intrinsics.width)
    if values.shape != shape:
        raise ResponseShapeError(f"prediction shape {values.shape} != request shape {shape}")
    if not np.isfinite(values).all():
        raise ResponseDensityError("prediction contains non-finite values")
    if (values <= 0).any():
        raise ResponseDensityError("prediction must be dense (every pixel > 0)")
    return PredictResponse(DepthMap(values))


def predict_gt_passthrough(req: PredictRequest, gt: DepthMap) -> PredictResponse:
    """Harness oracle: returns the supplied ground truth verbatim."""
    return _validated_response(req, gt.values)


def predict_nn_fill(req: PredictRequest) -> PredictResponse:
    """Naive completion: every hole takes its nearest known pixel's value."""
    if not req.known.values.any():
        raise ValueError("nn-fill needs at least one known pixel")
    rows, cols = nearest_valid_indices(req.known.values)
    return _validated_response(req, req.sparse.values[rows, cols])


@dataclass(frozen=True)
class AdapterCapabilities:
    manifest_mode: bool = False
    stateless: bool = False


def load_capabilities(command: Sequence[str]) -> AdapterCapabilities:
    """Read adapter.json next to the adapter executable, if there is one."""
    exe = Path(command[0])
    cap_path = exe.parent / "adapter.json"
    if exe.is_file() and cap_path.is_file():
        data = json.loads(cap_path.read_text())
        return AdapterCapabilities(
            manifest_mode=bool(data.get("manifest_mode", False)),
            stateless=bool(data.get("stateless", False)),
        )
    return AdapterCapabilities()


def request_mode(req: PredictRequest) -> str:
    return "monocular" if req.is_monocular else "completion"


def write_request_dir(
    dirpath, req: PredictRequest, sample_id: str = "sample", dataset: str = ""
) -> Path:
    """Materialize a request as a protocol sample directory."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_color(req.image, dirpath / "image.png")
    save_depth(req.sparse, dirpath / "sparse.dpt")
    save_mask(req.known, dirpath / "mask.png")
    intr = req.intrinsics
    (dirpath / "intrinsics.json").write_text(
        json.dumps(
            {
                "fx": intr.fx,
                "fy": intr.fy,
                "cx": intr.cx,
                "cy": intr.cy,
                "width": intr.width,
                "height": intr.height,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    (dirpath / "request.json").write_text(
        json.dumps(
            {"mode": request_mode(req), "sample_id": sample_id, "dataset": dataset},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return dirpath


def read_prediction(dirpath, req: PredictRequest) -> PredictResponse:
    pred_path = Path(dirpath) / "pred.dpt"
    if not pred_path.is_file():
        raise MissingPredictionError(f"adapter wrote no prediction at {pred_path}")
    try:
        depth = load_depth(pred_path)
    except ValueError as exc:
        raise MissingPredictionError(f"unreadable prediction at {pred_path}: {exc}") from exc
    return _validated_response(req, depth.values)


def _run_adapter(command: Sequence[str], arg: str, timeout: float) -> None:
    cmd = [*command, arg]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise AdapterTimeoutError(command, timeout) from None
    if proc.returncode != 0:
        raise AdapterProcessError(command, proc.returncode, proc.stderr)


def predict_external(
    req: PredictRequest,
    command: Sequence[str],
    workdir,
    *,
    sample_id: str = "sample",
    dataset: str = "",
    timeout: float = 300.0,
) -> PredictResponse:
    """Run one request through an external adapter process."""
    sample_dir = write_request_dir(Path(workdir) / sample_id, req, sample_id, dataset)
    _run_adapter(command, str(sample_dir), timeout)
    return read_prediction(sample_dir, req)


def predict_external_batch(
    reqs: Sequence[PredictRequest],
    command: Sequence[str],
    workdir,
    *,
    sample_ids: Sequence[str] | None = None,
    dataset: str = "",
    timeout: float = 300.0,
    capabilities: AdapterCapabilities | None = None,
) -> list[PredictResponse]:
    """Run many requests; uses manifest mode when the adapter supports it."""
    if capabilities is None:
        capabilities = load_capabilities(command)
    if sample_ids is None:
        sample_ids = [f"sample-{i:05d}" for i in range(len(reqs))]
    elif len(sample_ids) != len(reqs):
        raise ValueError("sample_ids length must match requests")
    if not capabilities.manifest_mode:
        return [
            predict_external(
                req, command, workdir, sample_id=sid, dataset=dataset, timeout=timeout
            )
            for req, sid in zip(reqs, sample_ids)
        ]
    workdir = Path(workdir)
    dirs = [
        write_request_dir(workdir / sid, req, sid, dataset)
        for req, sid in zip(reqs, sample_ids)
    ]
    manifest = workdir / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "samples": [
                    {"dir": str(d), "mode": request_mode(r)} for d, r in zip(dirs, reqs)
                ]
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    _run_adapter(command, str(manifest), timeout)
    return [read_prediction(d, r) for d, r in zip(dirs, reqs)]


def predict_aligned_external(
    req: PredictRequest,
    command: Sequence[str],
    workdir,
    *,
    align_cfg: AlignConfig = AlignConfig(),
    sample_id: str = "sample",
    dataset: str = "",
    timeout: float = 300.0,
) -> PredictResponse:
    """Monocular prediction followed by scale-and-shift alignment.

    The external model sees no sparse input; its prediction is then fit to
    the request's sparse depth (iterative MAE descent, closed-form fallback
    when the descent setup is degenerate) and clamped positive.
    """
    if not req.known.values.any():
        raise ValueError("aligned prediction needs a non-empty known mask to align to")
    mono = PredictRequest.monocular(req.image, req.intrinsics)
    resp = predict_external(
        mono, command, workdir, sample_id=sample_id, dataset=dataset, timeout=timeout
    )
    try:
        s, t = align_iterative(resp.depth, req.sparse, align_cfg)
    except ValueError:
        s, t = align_closed_form(resp.depth, req.sparse)
    aligned = np.maximum(s * resp.depth.values + t, MIN_DEPTH)
    return _validated_response(req, aligned)
