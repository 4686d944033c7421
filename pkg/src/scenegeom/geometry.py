"""Pinhole camera geometry: intrinsics, rigid poses, projection.

Conventions, shared by every module built on these types:

- Right-handed coordinate frames. The camera looks down +z; x points right
  and y points down in the image.
- Pixel (u, v) = (column, row). An integer pixel index IS the continuous
  image coordinate of that pixel; no half-pixel offset is applied anywhere.
  Dataset adapters must convert intrinsics that use a different convention.
- ``Pose`` stores the camera-to-world transform: X_world = R @ X_cam + t.
  World-to-camera is ``invert(pose)``.
- Depth is the camera-space z coordinate, in meters.

Camera JSON files contain ``{"fx", "fy", "cx", "cy", "width", "height",
"pose"}`` where ``pose`` is the flattened row-major 4x4 camera-to-world
matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside a "
                f"{self.width}x{self.height} image"
            )

    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform: X_world = rotation @ X_cam + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        tra = np.array(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0, atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Camera:
    """A posed pinhole camera."""

    intrinsics: Intrinsics
    pose: Pose


def unproject(u, v, d, intr: Intrinsics) -> np.ndarray:
    """Lift pixel coordinates and depth to a camera-space point.

    Accepts scalars or broadcastable arrays; returns shape (..., 3).
    Depth must be strictly positive.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("depth must be positive")
    x = (u - intr.cx) * d / intr.fx
    y = (v - intr.cy) * d / intr.fy
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)


def project(p, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project camera-space points to (u, v, depth).

    Points must lie in front of the camera (z > 0); the returned pixel
    coordinates may fall outside the image bounds -- callers clip.
    """
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("point behind camera (z <= 0)")
    u = intr.fx * (p[..., 0] / z) + intr.cx
    v = intr.fy * (p[..., 1] / z) + intr.cy
    return u, v, z


def transform(pose: Pose, p) -> np.ndarray:
    """Apply a rigid transform to points of shape (..., 3)."""
    p = np.asarray(p, dtype=np.float64)
    return p @ pose.rotation.T + pose.translation


def invert(pose: Pose) -> Pose:
    rt = pose.rotation.T
    return Pose(rt, -rt @ pose.translation)


def compose(a: Pose, b: Pose) -> Pose:
    """The transform applying ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix about an arbitrary axis (right-hand rule)."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ValueError("rotation axis must be non-zero")
    ux, uy, uz = axis / norm
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    k = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def pose_to_matrix(pose: Pose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = pose.rotation
    m[:3, 3] = pose.translation
    return m


def pose_from_matrix(m) -> Pose:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError(f"expected 4x4 matrix, got {m.shape}")
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], rtol=0, atol=1e-12):
        raise ValueError("bottom row must be [0, 0, 0, 1]")
    return Pose(m[:3, :3], m[:3, 3])


def camera_to_json(cam: Camera) -> dict:
    intr = cam.intrinsics
    return {
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "width": intr.width,
        "height": intr.height,
        "pose": [float(x) for x in pose_to_matrix(cam.pose).reshape(-1)],
    }


def camera_from_json(data: dict) -> Camera:
    try:
        intr = Intrinsics(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
        pose_vals = np.asarray(data["pose"], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"camera JSON missing field {exc}") from exc
    if pose_vals.size != 16:
        raise ValueError(f"camera pose must have 16 numbers, got {pose_vals.size}")
    return Camera(intr, pose_from_matrix(pose_vals.reshape(4, 4)))


def save_camera(cam: Camera, path) -> None:
    Path(path).write_text(json.dumps(camera_to_json(cam), indent=2, sort_keys=True) + "\n")


def load_camera(path) -> Camera:
    return camera_from_json(json.loads(Path(path).read_text()))
