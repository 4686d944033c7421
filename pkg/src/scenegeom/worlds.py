"""Procedural test worlds and synthetic benchmark fixtures.

``BoxWorld`` renders the interior of an axis-aligned box analytically: for
every pixel the ray is intersected with the box faces and the planar
(camera-z) depth and face color are returned. Because the geometry is in
closed form, it serves as the ground-truth oracle for the rendering,
warping, and scene-generation pipelines.

``make_benchmark_fixture`` writes small multi-view scenes plus a dataset
manifest, which is all the evaluation harness needs for smoke tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scenegeom.geometry import (
    Camera,
    Intrinsics,
    Pose,
    camera_to_json,
    rotation_about_axis,
)
from scenegeom.rasters import ColorImage, DepthMap, save_color, save_depth

_DEFAULT_FACE_COLORS = np.array(
    [
        [200, 60, 60],  # -x
        [60, 200, 60],  # +x
        [60, 60, 200],  # -y
        [200, 200, 60],  # +y
        [60, 200, 200],  # -z
        [200, 60, 200],  # +z
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class BoxWorld:
    """Axis-aligned box interior with one flat color per face."""

    lo: np.ndarray = field(default_factory=lambda: np.array([-3.0, -2.0, -3.0]))
    hi: np.ndarray = field(default_factory=lambda: np.array([3.0, 2.0, 3.0]))
    face_colors: np.ndarray = field(default_factory=lambda: _DEFAULT_FACE_COLORS.copy())

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not (lo < hi).all():
            raise ValueError("box lo must be strictly below hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "face_colors", np.asarray(self.face_colors, np.uint8).reshape(6, 3))

    def _trace(self, cam: Camera) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel (planar depth, face index) for a camera inside the box."""
        origin = cam.pose.translation
        if not ((self.lo < origin).all() and (origin < self.hi).all()):
            raise ValueError("camera must be strictly inside the box")
        intr = cam.intrinsics
        us, vs = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
        gx = (us - intr.cx) / intr.fx
        gy = (vs - intr.cy) / intr.fy
        r = cam.pose.rotation
        # World-space ray directions; camera-space z component is 1, so the
        # ray parameter at the hit IS the planar depth.
        dirs = np.stack(
            [
                r[0, 0] * gx + r[0, 1] * gy + r[0, 2],
                r[1, 0] * gx + r[1, 1] * gy + r[1, 2],
                r[2, 0] * gx + r[2, 1] * gy + r[2, 2],
            ],
            axis=-1,
        )
        t_exit = np.full(gx.shape, np.inf)
        face = np.zeros(gx.shape, dtype=np.int64)
        for axis in range(3):
            d = dirs[..., axis]
            with np.errstate(divide="ignore"):
                t = np.where(
                    d > 0,
                    (self.hi[axis] - origin[axis]) / d,
                    np.where(d < 0, (self.lo[axis] - origin[axis]) / d, np.inf),
                )
            f = np.where(d > 0, 2 * axis + 1, 2 * axis)
            closer = t < t_exit
            t_exit = np.where(closer, t, t_exit)
            face = np.where(closer, f, face)
        return t_exit, face

    def depth_map(self, cam: Camera) -> DepthMap:
        depth, _ = self._trace(cam)
        return DepthMap(depth)

    def color_image(self, cam: Camera) -> ColorImage:
        _, face = self._trace(cam)
        return ColorImage(self.face_colors[face])

    def render(self, cam: Camera) -> tuple[ColorImage, DepthMap]:
        depth, face = self._trace(cam)
        return ColorImage(self.face_colors[face]), DepthMap(depth)


def simple_intrinsics(width: int, height: int, focal_scale: float = 0.6) -> Intrinsics:
    f = focal_scale * width
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def fixture_worlds(n_scenes: int) -> list[BoxWorld]:
    """The default per-scene worlds used by :func:`make_benchmark_fixture`."""
    return [
        BoxWorld(lo=np.array([-3.0 - s, -2.0, -3.0 - s]), hi=np.array([3.0 + s, 2.0, 3.0 + s]))
        for s in range(n_scenes)
    ]


def make_benchmark_fixture(
    root,
    *,
    n_scenes: int = 2,
    frames_per_scene: int = 110,
    width: int = 32,
    height: int = 24,
    depth_format: str = "dpt",
    yaw_step_deg: float = 1.0,
    worlds: list[BoxWorld] | None = None,
) -> Path:
    """Write synthetic scenes (image + depth + camera per frame) and a manifest.

    Frames follow a slow in-place yaw with a small lateral drift, so frames a
    few indices apart overlap heavily yet still reveal new geometry.
    """
    root = Path(root)
    intr = simple_intrinsics(width, height)
    suffix = "dpt" if depth_format == "dpt" else "png"
    if worlds is None:
        worlds = fixture_worlds(n_scenes)
    elif len(worlds) != n_scenes:
        raise ValueError("worlds length must match n_scenes")
    scenes = []
    for s in range(n_scenes):
        world = worlds[s]
        scene_id = f"scene{s}"
        scene_dir = root / scene_id
        scene_dir.mkdir(parents=True, exist_ok=True)
        views = []
        for f in range(frames_per_scene):
            yaw = np.deg2rad(f * yaw_step_deg)
            rot = rotation_about_axis([0.0, 1.0, 0.0], yaw)
            pos = np.array([0.2 * np.sin(f * 0.05), 0.0, 0.1 * np.cos(f * 0.05)])
            cam = Camera(intr, Pose(rot, pos))
            image, depth = world.render(cam)
            image_rel = f"{scene_id}/frame{f:04d}.png"
            depth_rel = f"{scene_id}/frame{f:04d}_depth.{suffix}"
            save_color(image, root / image_rel)
            save_depth(depth, root / depth_rel, fmt=depth_format)
            views.append(
                {
                    "image": image_rel,
                    "depth": depth_rel,
                    "frame": f,
                    "camera": camera_to_json(cam),
                }
            )
        scenes.append({"id": scene_id, "views": views})
    manifest = root / "manifest.json"
    manifest.write_text(
        json.dumps({"dataset": "synthetic-box", "scenes": scenes}, indent=2, sort_keys=True) + "\n"
    )
    return manifest
