"""Colored world-space point clouds: lifting, merging, z-buffer rendering.

Rendering splats each point to its nearest pixel (round-half-up on the
continuous coordinates) and keeps the smallest camera-space depth per pixel.
When two points land on the same pixel within ``Z_TIE`` of the minimum
depth, the lowest point index wins, so results are deterministic and
independent of evaluation order. There is no occlusion epsilon or surface
thickness beyond that tie rule.

This is deliberately a hard z-buffer, not soft alpha compositing: it is
deterministic, exactly testable, and the benchmark consumes depth only.

PLY files store x, y, z as float32 plus red, green, blue (uchar) and a
``source_view`` int32 tag per vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scenegeom.geometry import Camera, transform, unproject
from scenegeom.rasters import ColorImage, DepthMap, Mask

Z_TIE = 1e-9

_PLY_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
        ("source_view", "<i4"),
    ]
)


@dataclass(frozen=True)
class PointCloud:
    """World-space points with colors and the generation step that made them."""

    positions: np.ndarray
    colors: np.ndarray
    source_view: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.array(self.colors, dtype=np.uint8).reshape(-1, 3)
        src = np.array(self.source_view, dtype=np.int32).reshape(-1)
        if not (len(pos) == len(col) == len(src)):
            raise ValueError(
                f"field lengths differ: {len(pos)} positions, {len(col)} colors, "
                f"{len(src)} source tags"
            )
        if not np.isfinite(pos).all():
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "source_view", src)

    def __len__(self) -> int:
        return len(self.positions)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), np.uint8), np.zeros(0, np.int32))


def lift(image: ColorImage, depth: DepthMap, cam: Camera, select: Mask, view_tag: int = 0) -> PointCloud:
    """Lift selected pixels with valid depth into world-space points.

    One point per pixel where ``select`` is True and depth > 0; colors are
    copied from the image and every point is tagged with ``view_tag``.
    """
    intr = cam.intrinsics
    shapes = {
        "image": (image.height, image.width),
        "depth": (depth.height, depth.width),
        "select": (select.height, select.width),
    }
    for name, shape in shapes.items():
        if shape != (intr.height, intr.width):
            raise ValueError(
                f"{name} shape {shape} does not match camera resolution "
                f"({intr.height}, {intr.width})"
            )
    sel = select.values & (depth.values > 0)
    vs, us = np.nonzero(sel)
    if vs.size == 0:
        return PointCloud.empty()
    pts_cam = unproject(us.astype(np.float64), vs.astype(np.float64), depth.values[sel], intr)
    positions = transform(cam.pose, pts_cam)
    return PointCloud(positions, image.values[sel], np.full(vs.size, view_tag, np.int32))


def merge(a: PointCloud, b: PointCloud) -> PointCloud:
    """Concatenate two clouds; tags and ordering of both inputs are kept."""
    return PointCloud(
        np.concatenate([a.positions, b.positions]),
        np.concatenate([a.colors, b.colors]),
        np.concatenate([a.source_view, b.source_view]),
    )


def _world_to_cam_components(cam: Camera, positions: np.ndarray):
    # Componentwise on purpose: elementwise numpy ops round identically to a
    # scalar evaluation of the same expressions, keeping rasterization
    # reproducible bit-for-bit regardless of the BLAS in use.
    r = cam.pose.rotation
    t = cam.pose.translation
    dx = positions[:, 0] - t[0]
    dy = positions[:, 1] - t[1]
    dz = positions[:, 2] - t[2]
    x = dx * r[0, 0] + dy * r[1, 0] + dz * r[2, 0]
    y = dx * r[0, 1] + dy * r[1, 1] + dz * r[2, 1]
    z = dx * r[0, 2] + dy * r[1, 2] + dz * r[2, 2]
    return x, y, z


def _rasterize(pc: PointCloud, cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer splat; returns (depth, winner point index) maps, -1 = hole."""
    intr = cam.intrinsics
    h, w = intr.height, intr.width
    depth = np.zeros(h * w)
    winner = np.full(h * w, -1, np.int64)
    n = len(pc)
    if n == 0:
        return depth.reshape(h, w), winner.reshape(h, w)

    x, y, z = _world_to_cam_components(cam, pc.positions)
    front = z > 0
    idx = np.flatnonzero(front)
    x, y, z = x[front], y[front], z[front]
    u = intr.fx * (x / z) + intr.cx
    v = intr.fy * (y / z) + intr.cy
    # Bounds-check in float space: round-half-up lands inside the image iff
    # u in [-0.5, w - 0.5), and the cast stays overflow-free.
    inb = (u >= -0.5) & (u < w - 0.5) & (v >= -0.5) & (v < h - 0.5)
    idx, z = idx[inb], z[inb]
    if idx.size == 0:
        return depth.reshape(h, w), winner.reshape(h, w)
    px = np.floor(u[inb] + 0.5).astype(np.int64)
    py = np.floor(v[inb] + 0.5).astype(np.int64)
    pix = py * w + px

    zmin = np.full(h * w, np.inf)
    np.minimum.at(zmin, pix, z)
    near = z - zmin[pix] < Z_TIE
    cand = np.full(h * w, n, np.int64)
    np.minimum.at(cand, pix[near], idx[near])
    covered = cand < n
    winner[covered] = cand[covered]

    z_by_index = np.zeros(n)
    z_by_index[idx] = z
    depth[covered] = z_by_index[winner[covered]]
    return depth.reshape(h, w), winner.reshape(h, w)


def render_view(
    pc: PointCloud, cam: Camera, canvas_color: tuple[int, int, int] = (128, 128, 128)
) -> tuple[ColorImage, DepthMap, Mask]:
    """Render color and depth in one pass; hole pixels get the canvas color."""
    depth, winner = _rasterize(pc, cam)
    covered = winner >= 0
    color = np.empty((*covered.shape, 3), np.uint8)
    color[:] = np.asarray(canvas_color, np.uint8)
    if covered.any():
        color[covered] = pc.colors[winner[covered]]
    return ColorImage(color), DepthMap(depth), Mask(covered)


def render_depth(pc: PointCloud, cam: Camera) -> tuple[DepthMap, Mask]:
    """Depth of the nearest point per pixel; mask is True where covered."""
    depth, winner = _rasterize(pc, cam)
    return DepthMap(depth), Mask(winner >= 0)


def render_color(
    pc: PointCloud, cam: Camera, canvas_color: tuple[int, int, int] = (128, 128, 128)
) -> tuple[ColorImage, Mask]:
    """Color of the nearest point per pixel; holes get the canvas color."""
    color, _, covered = render_view(pc, cam, canvas_color)
    return color, covered


def save_ply(pc: PointCloud, path) -> None:
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {len(pc)}",
            "property float x",
            "property float y",
            "property float z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "property int source_view",
            "end_header",
            "",
        ]
    )
    rec = np.empty(len(pc), dtype=_PLY_DTYPE)
    rec["x"], rec["y"], rec["z"] = pc.positions.T.astype(np.float32)
    rec["red"], rec["green"], rec["blue"] = pc.colors.T
    rec["source_view"] = pc.source_view
    Path(path).write_bytes(header.encode("ascii") + rec.tobytes())


def load_ply(path) -> PointCloud:
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header = raw[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ValueError(f"{path}: expected binary little-endian PLY")
    count = None
    props = []
    for line in header:
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line.startswith("property"):
            props.append(line.split()[-1])
    expected = [name for name, *_ in _PLY_DTYPE.descr]
    if count is None or props != expected:
        raise ValueError(f"{path}: unsupported PLY layout {props}")
    rec = np.frombuffer(raw, dtype=_PLY_DTYPE, count=count, offset=end + len(b"end_header\n"))
    positions = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
    return PointCloud(positions, colors, rec["source_view"].astype(np.int32))
