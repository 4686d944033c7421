"""Iterative 360-degree scene building: orbits, support views, splat export.

The build loop starts from one image: a completer (any predictor honoring
the protocol in :mod:`scenegeom.predictors`) estimates its depth, the
pixels are lifted into a point cloud, and the camera yaws in place along an
orbit. At every new view the current cloud is rendered to a color canvas,
sparse depth, and coverage mask; a generator plugin hallucinates the image
content inside the holes; the completer fills in depth conditioned on the
rendered sparse depth; the prediction is snapped at depth edges; and only
the hole pixels contribute new points. After the loop closes, support views
orbit each frame's depth centroid to peek behind objects, processed the
same way against a frozen snapshot of the cloud.

Generator plugins follow a directory protocol analogous to the predictor
one: the harness writes ``canvas.png``, ``hole_mask.png`` (255 = pixel to
inpaint), ``prompt.txt``, and ``request.json``, invokes the command with
the directory path, and reads back ``inpainted.png``. Generators must leave
pixels outside the hole mask unchanged; small drift (up to 2/255 per
channel) is tolerated and larger deviations are logged as warnings, not
errors.

Rendering uses the hard z-buffer from :mod:`scenegeom.pointcloud`, not soft
alpha compositing; that is a deliberate simplification.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from itertools import count
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from scenegeom.alignment import SnapConfig, snap_depth
from scenegeom.geometry import (
    Camera,
    Pose,
    camera_from_json,
    camera_to_json,
    rotation_about_axis,
)
from scenegeom.pointcloud import PointCloud, lift, merge, render_view, save_ply
from scenegeom.predictors import (
    AdapterProcessError,
    AdapterTimeoutError,
    MissingPredictionError,
    PredictRequest,
    PredictResponse,
    predict_external,
)
from scenegeom.rasters import (
    ColorImage,
    DepthMap,
    Mask,
    load_color,
    mask_of,
    save_color,
    save_mask,
)

logger = logging.getLogger(__name__)

# Plugin signatures used by the build loop. The camera is handed through so
# procedural oracles can answer analytically; file-protocol wrappers ignore it.
GeneratorFn = Callable[[ColorImage, Mask, Camera], ColorImage]
CompleterFn = Callable[[PredictRequest, Camera], PredictResponse]

GENERATOR_DRIFT_TOLERANCE = 2  # 8-bit channel units, outside the hole mask


@dataclass(frozen=True)
class OrbitConfig:
    """Stationary-camera orbit: regular yaw steps, then a tapered closure.

    Regular steps of ``azimuth_step`` degrees run until ``taper_after``;
    the remaining gap to ``loop_target`` is then closed in ``taper_steps``
    steps that successively halve the gap (the last two steps are equal so
    the loop closes exactly). ``taper_steps`` = 0 disables tapering and the
    loop closes with one final regular-or-shorter step.
    """

    azimuth_step: float = 25.0
    taper_steps: int = 3
    taper_after: float = 225.0
    width: int = 720
    height: int = 480
    loop_target: float = 360.0

    def __post_init__(self):
        if not 0 < self.azimuth_step < 180:
            raise ValueError("azimuth_step must be in (0, 180)")
        if self.taper_steps < 0:
            raise ValueError("taper_steps must be >= 0")
        if not 0 < self.taper_after <= self.loop_target:
            raise ValueError("taper_after must be in (0, loop_target]")


@dataclass(frozen=True)
class SupportConfig:
    views_per_frame: int = 8
    max_angle_delta: float = 5.0

    def __post_init__(self):
        if self.views_per_frame < 0:
            raise ValueError("views_per_frame must be >= 0")
        if self.max_angle_delta < 0:
            raise ValueError("max_angle_delta must be >= 0")


@dataclass(frozen=True)
class ViewArtifact:
    """One processed view: camera plus the image and depth used for lifting."""

    camera: Camera
    image: ColorImage
    depth: DepthMap
    kind: str  # "orbit" | "support"
    step: int


def orbit_azimuths(cfg: OrbitConfig) -> list[float]:
    """Cumulative azimuths of all orbit views, starting at 0 degrees."""
    azimuths = [0.0]
    a = 0.0
    limit = min(cfg.taper_after, cfg.loop_target) if cfg.taper_steps > 0 else cfg.loop_target
    while a + cfg.azimuth_step < cfg.loop_target and a + cfg.azimuth_step <= limit + 1e-9:
        a += cfg.azimuth_step
        azimuths.append(a)
    if cfg.taper_steps > 0:
        gap = cfg.loop_target - a
        if gap > 1e-9:
            parts = [gap / 2**k for k in range(1, cfg.taper_steps)]
            parts.append(gap - sum(parts))
            for part in parts[:-1]:
                a += part
                azimuths.append(a)
    return azimuths


def orbit_trajectory(initial: Camera, cfg: OrbitConfig = OrbitConfig()) -> list[Camera]:
    """Cameras yawing in place about the initial camera's up axis."""
    r0 = initial.pose.rotation
    up_world = -r0[:, 1]  # image y points down
    cams = []
    for az in orbit_azimuths(cfg):
        rot = rotation_about_axis(up_world, np.deg2rad(az)) @ r0
        cams.append(Camera(initial.intrinsics, Pose(rot, initial.pose.translation)))
    return cams


def look_at_rotation(eye, target, up) -> np.ndarray:
    """Camera-to-world rotation looking from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("look-at target coincides with the eye")
    z = forward / norm
    down = -np.asarray(up, dtype=np.float64)
    x = np.cross(down, z)
    xn = np.linalg.norm(x)
    if xn < 1e-12:
        raise ValueError("look direction parallel to the up vector")
    x = x / xn
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def support_views(
    frame_cam: Camera,
    frame_depth: DepthMap,
    cfg: SupportConfig = SupportConfig(),
    rng: np.random.Generator | None = None,
) -> list[Camera]:
    """Look-at cameras orbiting the view's depth centroid.

    The center point lies on the frame camera's principal ray at the mean of
    its valid depths; each support camera rotates the frame position about
    that center by uniform yaw/pitch within +-max_angle_delta and looks back
    at it with the frame camera's up vector.
    """
    valid = frame_depth.values[frame_depth.values > 0]
    if valid.size == 0:
        raise ValueError("frame depth has no valid pixels")
    if rng is None:
        rng = np.random.default_rng(0)
    r = frame_cam.pose.rotation
    pos = frame_cam.pose.translation
    center = pos + float(valid.mean()) * r[:, 2]
    up = -r[:, 1]
    right = r[:, 0]
    offset = pos - center
    cams = []
    for _ in range(cfg.views_per_frame):
        az = np.deg2rad(rng.uniform(-cfg.max_angle_delta, cfg.max_angle_delta))
        el = np.deg2rad(rng.uniform(-cfg.max_angle_delta, cfg.max_angle_delta))
        rot_offset = rotation_about_axis(up, az) @ rotation_about_axis(right, el)
        new_pos = center + rot_offset @ offset
        cams.append(
            Camera(frame_cam.intrinsics, Pose(look_at_rotation(new_pos, center, up), new_pos))
        )
    return cams


def external_generator(command: Sequence[str], workdir, *, prompt: str = "", timeout: float = 300.0) -> GeneratorFn:
    """Wrap an inpainting command into the generator plugin interface."""
    workdir = Path(workdir)
    ids = count()

    def generate(canvas: ColorImage, holes: Mask, cam: Camera) -> ColorImage:
        sample_dir = workdir / f"generate-{next(ids):04d}"
        sample_dir.mkdir(parents=True, exist_ok=True)
        save_color(canvas, sample_dir / "canvas.png")
        save_mask(holes, sample_dir / "hole_mask.png")
        (sample_dir / "prompt.txt").write_text(prompt)
        (sample_dir / "request.json").write_text(
            json.dumps({"mode": "inpaint", "sample_id": sample_dir.name}, sort_keys=True) + "\n"
        )
        cmd = [*command, str(sample_dir)]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            raise AdapterTimeoutError(command, timeout) from None
        if proc.returncode != 0:
            raise AdapterProcessError(command, proc.returncode, proc.stderr)
        out_path = sample_dir / "inpainted.png"
        if not out_path.is_file():
            raise MissingPredictionError(f"generator wrote no image at {out_path}")
        image = load_color(out_path)
        if (image.height, image.width) != (canvas.height, canvas.width):
            raise MissingPredictionError("generator returned an image of the wrong size")
        return image

    return generate


def external_completer(command: Sequence[str], workdir, *, timeout: float = 300.0) -> CompleterFn:
    """Wrap a predictor-protocol command into the completer plugin interface."""
    workdir = Path(workdir)
    ids = count()

    def complete(req: PredictRequest, cam: Camera) -> PredictResponse:
        return predict_external(
            req, command, workdir, sample_id=f"complete-{next(ids):04d}", timeout=timeout
        )

    return complete


def _check_generator_contract(canvas: ColorImage, generated: ColorImage, holes: Mask, step: int) -> None:
    keep = ~holes.values
    if not keep.any():
        return
    drift = np.abs(
        canvas.values.astype(np.int16)[keep] - generated.values.astype(np.int16)[keep]
    ).max()
    if drift > GENERATOR_DRIFT_TOLERANCE:
        logger.warning(
            "step %d: generator changed %d/255 outside the hole mask "
            "(tolerance %d); continuing",
            step,
            int(drift),
            GENERATOR_DRIFT_TOLERANCE,
        )


def _process_view(
    cloud: PointCloud,
    cam: Camera,
    step: int,
    kind: str,
    generator: GeneratorFn,
    completer: CompleterFn,
    snap: SnapConfig,
) -> tuple[PointCloud, ViewArtifact]:
    """Render, hallucinate, complete, snap, and lift one view's holes.

    Returns the newly lifted points (empty when the view had no holes) and
    the per-view artifact.
    """
    canvas, sparse, known = render_view(cloud, cam)
    holes = Mask(~known.values)
    if not holes.values.any():
        logger.info("%s step %d: no holes, skipping generation", kind, step)
        return PointCloud.empty(), ViewArtifact(cam, canvas, sparse, kind, step)
    image = generator(canvas, holes, cam)
    _check_generator_contract(canvas, image, holes, step)
    response = completer(PredictRequest(image, sparse, known, cam.intrinsics), cam)
    depth = snap_depth(response.depth, snap)
    new_points = lift(image, depth, cam, holes, view_tag=step)
    return new_points, ViewArtifact(cam, image, depth, kind, step)


def build_scene(
    initial_image: ColorImage,
    initial_camera: Camera,
    generator: GeneratorFn,
    completer: CompleterFn,
    orbit: OrbitConfig = OrbitConfig(),
    support: SupportConfig = SupportConfig(),
    snap: SnapConfig = SnapConfig(),
    *,
    seed: int = 0,
) -> tuple[PointCloud, list[ViewArtifact]]:
    """Run the full orbit + support-view loop; returns the cloud and all
    per-view artifacts in processing order."""
    intr = initial_camera.intrinsics
    if (initial_image.height, initial_image.width) != (intr.height, intr.width):
        raise ValueError("initial image does not match the camera resolution")

    cams = orbit_trajectory(initial_camera, orbit)
    artifacts: list[ViewArtifact] = []

    # Step 0: monocular depth for the input image; every pixel becomes a point.
    response = completer(PredictRequest.monocular(initial_image, intr), cams[0])
    depth0 = response.depth
    cloud = lift(initial_image, depth0, cams[0], mask_of(depth0), view_tag=0)
    artifacts.append(ViewArtifact(cams[0], initial_image, depth0, "orbit", 0))

    for step, cam in enumerate(cams[1:], start=1):
        try:
            new_points, artifact = _process_view(
                cloud, cam, step, "orbit", generator, completer, snap
            )
        except Exception as exc:
            raise RuntimeError(f"orbit step {step} failed: {exc}") from exc
        cloud = merge(cloud, new_points)
        artifacts.append(artifact)

    # Support views render against a frozen snapshot of the orbit cloud and
    # merge afterwards in view order, so results do not depend on scheduling.
    frozen = cloud
    additions: list[PointCloud] = []
    step_counter = count(len(cams))
    for frame_index, frame_art in enumerate(list(artifacts)):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(frame_index,)))
        for cam in support_views(frame_art.camera, frame_art.depth, support, rng):
            step = next(step_counter)
            try:
                new_points, artifact = _process_view(
                    frozen, cam, step, "support", generator, completer, snap
                )
            except Exception as exc:
                raise RuntimeError(f"support step {step} failed: {exc}") from exc
            additions.append(new_points)
            artifacts.append(artifact)
    for new_points in additions:
        cloud = merge(cloud, new_points)
    return cloud, artifacts


def export_splat_inputs(cloud: PointCloud, views: Sequence[ViewArtifact], outdir) -> Path:
    """Write the splat-optimization inputs: PLY cloud, per-view image +
    camera JSON, and a manifest tying them together."""
    if len(cloud) == 0:
        raise ValueError("refusing to export an empty point cloud")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_ply(cloud, outdir / "cloud.ply")
    entries = []
    for i, view in enumerate(views):
        image_rel = f"view_{i:04d}.png"
        camera_rel = f"view_{i:04d}.camera.json"
        save_color(view.image, outdir / image_rel)
        (outdir / camera_rel).write_text(
            json.dumps(camera_to_json(view.camera), indent=2, sort_keys=True) + "\n"
        )
        entries.append(
            {"image": image_rel, "camera": camera_rel, "kind": view.kind, "step": view.step}
        )
    manifest = outdir / "manifest.json"
    manifest.write_text(
        json.dumps({"pointcloud": "cloud.ply", "views": entries}, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def load_splat_manifest(outdir) -> list[Camera]:
    """Reload the cameras referenced by a splat-input manifest."""
    outdir = Path(outdir)
    data = json.loads((outdir / "manifest.json").read_text())
    return [
        camera_from_json(json.loads((outdir / entry["camera"]).read_text()))
        for entry in data["views"]
    ]
