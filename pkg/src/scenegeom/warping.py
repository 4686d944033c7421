"""Viewpoint warping, occlusion-mask datasets, and training-sample export.

Warping a depth map to another camera is defined as lifting its valid
pixels to a point cloud and z-buffer rendering from the destination view,
so occlusion holes appear exactly where the geometry dictates. The masks
collected from many such warps reproduce the occlusion patterns a depth
completer sees during scene generation; a training sample pairs a teacher
depth map with one of those masks (or, with probability ``p``, an all-empty
mask that turns the task into plain depth estimation).

The teacher depth arrives precomputed through the predictor protocol; this
module never runs a model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from scenegeom.geometry import (
    Camera,
    Pose,
    camera_from_json,
    camera_to_json,
    rotation_about_axis,
)
from scenegeom.pointcloud import lift, render_depth
from scenegeom.rasters import (
    ColorImage,
    DepthMap,
    Mask,
    load_depth,
    load_mask,
    mask_of,
    resize_mask_nearest,
    save_color,
    save_depth,
    save_mask,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewpointSampler:
    """Uniform camera perturbations: yaw/pitch in degrees, translation in
    meters per camera axis. Sampling is deterministic given the seed."""

    azimuth_range: float = 15.0
    elevation_range: float = 5.0
    translation_range: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.azimuth_range, self.elevation_range, self.translation_range) < 0:
            raise ValueError("sampler ranges must be >= 0")


@dataclass(frozen=True)
class MaskSetEntry:
    mask: Mask
    source_id: str
    camera: Camera


@dataclass(frozen=True)
class MaskSet:
    entries: tuple[MaskSetEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def masks(self) -> list[Mask]:
        return [e.mask for e in self.entries]


def warp_depth(depth: DepthMap, src: Camera, dst: Camera) -> tuple[DepthMap, Mask]:
    """Reproject a depth map into another view; True in the mask marks
    pixels that received a value."""
    intr = src.intrinsics
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise ValueError(
            f"depth shape ({depth.height}, {depth.width}) does not match source "
            f"resolution ({intr.height}, {intr.width})"
        )
    blank = ColorImage(np.zeros((depth.height, depth.width, 3), np.uint8))
    return render_depth(lift(blank, depth, src, mask_of(depth)), dst)


def sample_viewpoint(
    base: Camera, sampler: ViewpointSampler, rng: np.random.Generator | None = None
) -> Camera:
    """Perturb a camera by uniform yaw/pitch and camera-frame translation.

    Intrinsics are unchanged. Without an explicit generator the sampler's
    seed is used, so repeated calls return the same camera.
    """
    if rng is None:
        rng = np.random.default_rng(sampler.rng_seed)
    az = np.deg2rad(rng.uniform(-sampler.azimuth_range, sampler.azimuth_range))
    el = np.deg2rad(rng.uniform(-sampler.elevation_range, sampler.elevation_range))
    delta = rng.uniform(-sampler.translation_range, sampler.translation_range, size=3)
    r0 = base.pose.rotation
    # Yaw about the camera y axis, then pitch about the camera x axis.
    rot = r0 @ rotation_about_axis([0.0, 1.0, 0.0], az) @ rotation_about_axis([1.0, 0.0, 0.0], el)
    return Camera(base.intrinsics, Pose(rot, base.pose.translation + r0 @ delta))


def _derived_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def generate_mask_set(
    depths: Sequence[tuple[DepthMap, Camera]],
    views_per_image: int = 1,
    sampler: ViewpointSampler = ViewpointSampler(),
    source_ids: Sequence[str] | None = None,
) -> MaskSet:
    """Warp every depth map to sampled viewpoints and keep the hole masks.

    Produces ``len(depths) * views_per_image`` masks at source resolution.
    Each (image, view) pair draws from its own seed derived from the sampler
    seed, so the result does not depend on scheduling.
    """
    if views_per_image < 1:
        raise ValueError("views_per_image must be >= 1")
    if source_ids is None:
        source_ids = [f"{k:04d}" for k in range(len(depths))]
    elif len(source_ids) != len(depths):
        raise ValueError("source_ids length must match depths")
    entries = []
    for k, (depth, cam) in enumerate(depths):
        for view in range(views_per_image):
            dst = sample_viewpoint(cam, sampler, _derived_rng(sampler.rng_seed, k, view))
            _, mask = warp_depth(depth, cam, dst)
            entries.append(MaskSetEntry(mask, source_ids[k], dst))
    return MaskSet(tuple(entries))


def export_training_sample(
    image: ColorImage,
    teacher_depth: DepthMap,
    mask_set: MaskSet,
    p: float,
    rng: np.random.Generator,
) -> tuple[ColorImage, Mask, DepthMap, DepthMap]:
    """Build one (image, mask, sparse depth, target depth) training sample.

    With probability ``p`` the mask is all-False and the sparse input empty
    (pure depth estimation); otherwise a mask drawn uniformly from the set
    (nearest-neighbor resized to the image resolution) gates the teacher
    depth. The target is always the full teacher depth.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if (image.height, image.width) != (teacher_depth.height, teacher_depth.width):
        raise ValueError("image and teacher depth shapes differ")
    if (teacher_depth.values == 0).any():
        raise ValueError("teacher depth must be dense")
    if rng.random() < p:
        mask = Mask(np.zeros((image.height, image.width), bool))
    else:
        if len(mask_set) == 0:
            raise ValueError("mask set is empty but p < 1")
        entry = mask_set.entries[int(rng.integers(len(mask_set)))]
        mask = resize_mask_nearest(entry.mask, image.width, image.height)
    sparse = DepthMap(np.where(mask.values, teacher_depth.values, 0.0))
    return image, mask, sparse, teacher_depth


def save_mask_set(mask_set: MaskSet, outdir) -> Path:
    """Write ``masks/<source-id>_<view>.png`` plus a provenance manifest."""
    outdir = Path(outdir)
    (outdir / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    view_counter: dict[str, int] = {}
    for entry in mask_set.entries:
        view = view_counter.get(entry.source_id, 0)
        view_counter[entry.source_id] = view + 1
        rel = f"masks/{entry.source_id}_{view:02d}.png"
        save_mask(entry.mask, outdir / rel)
        records.append(
            {
                "source_id": entry.source_id,
                "view_index": view,
                "path": rel,
                "camera": camera_to_json(entry.camera),
            }
        )
    manifest = outdir / "manifest.json"
    manifest.write_text(json.dumps({"masks": records}, indent=2, sort_keys=True) + "\n")
    return manifest


def load_mask_set(indir) -> MaskSet:
    indir = Path(indir)
    data = json.loads((indir / "manifest.json").read_text())
    entries = []
    for rec in data["masks"]:
        entries.append(
            MaskSetEntry(
                mask=load_mask(indir / rec["path"]),
                source_id=rec["source_id"],
                camera=camera_from_json(rec["camera"]),
            )
        )
    return MaskSet(tuple(entries))


def save_training_sample(
    outdir, image: ColorImage, mask: Mask, sparse: DepthMap, target: DepthMap
) -> None:
    """Write one sample directory: image.png, mask.png, sparse.dpt, target.dpt."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_color(image, outdir / "image.png")
    save_mask(mask, outdir / "mask.png")
    save_depth(sparse, outdir / "sparse.dpt")
    save_depth(target, outdir / "target.dpt")


def load_training_sample(indir) -> tuple[ColorImage, Mask, DepthMap, DepthMap]:
    from scenegeom.rasters import load_color

    indir = Path(indir)
    return (
        load_color(indir / "image.png"),
        load_mask(indir / "mask.png"),
        load_depth(indir / "sparse.dpt"),
        load_depth(indir / "target.dpt"),
    )
