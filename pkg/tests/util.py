"""Shared test helpers: random geometry factories and independent oracles.

The oracles deliberately re-derive results from first principles (explicit
matrix inverses, per-pixel scans, straight-line loops) so the library code
is checked against a second, independent route.
"""

from __future__ import annotations

import numpy as np

from scenegeom.geometry import Camera, Intrinsics, Pose


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_pose(rng: np.random.Generator, translation_scale: float = 2.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-translation_scale, translation_scale, 3))


def random_intrinsics(rng: np.random.Generator, width: int = 32, height: int = 24) -> Intrinsics:
    return Intrinsics(
        fx=float(rng.uniform(0.4, 1.2) * width),
        fy=float(rng.uniform(0.4, 1.2) * width),
        cx=float(rng.uniform(0.3, 0.7) * width),
        cy=float(rng.uniform(0.3, 0.7) * height),
        width=width,
        height=height,
    )


def random_camera(rng: np.random.Generator, width: int = 32, height: int = 24) -> Camera:
    return Camera(random_intrinsics(rng, width, height), random_pose(rng))


def zbuffer_oracle(positions, cam: Camera, tie: float = 1e-9):
    """Exhaustive per-pixel scan: for every pixel keep the nearest point.

    Mirrors the documented rasterization definition (round-half-up pixel
    assignment, minimum depth, lowest index among depths within ``tie`` of
    the minimum) with scalar arithmetic in the same expression order, so
    agreement is required bit-for-bit.
    """
    intr = cam.intrinsics
    r = cam.pose.rotation
    t = cam.pose.translation
    h, w = intr.height, intr.width
    per_pixel: dict[tuple[int, int], list[tuple[float, int]]] = {}
    for i, p in enumerate(positions):
        dx = p[0] - t[0]
        dy = p[1] - t[1]
        dz = p[2] - t[2]
        x = dx * r[0, 0] + dy * r[1, 0] + dz * r[2, 0]
        y = dx * r[0, 1] + dy * r[1, 1] + dz * r[2, 1]
        z = dx * r[0, 2] + dy * r[1, 2] + dz * r[2, 2]
        if z <= 0:
            continue
        u = intr.fx * (x / z) + intr.cx
        v = intr.fy * (y / z) + intr.cy
        px = int(np.floor(u + 0.5))
        py = int(np.floor(v + 0.5))
        if 0 <= px < w and 0 <= py < h:
            per_pixel.setdefault((py, px), []).append((float(z), i))
    depth = np.zeros((h, w))
    winner = np.full((h, w), -1, np.int64)
    for (py, px), entries in per_pixel.items():
        zmin = min(z for z, _ in entries)
        best = min(i for z, i in entries if z - zmin < tie)
        depth[py, px] = next(z for z, i in entries if i == best)
        winner[py, px] = best
    return depth, winner


def nearest_valid_oracle(valid: np.ndarray):
    """Brute-force nearest-True-pixel with the scanline tie rule."""
    h, w = valid.shape
    cand = [(r, c) for r in range(h) for c in range(w) if valid[r, c]]
    rows = np.empty((h, w), np.int64)
    cols = np.empty((h, w), np.int64)
    for y in range(h):
        for x in range(w):
            best = min(cand, key=lambda rc: ((rc[0] - y) ** 2 + (rc[1] - x) ** 2, rc[0], rc[1]))
            rows[y, x], cols[y, x] = best
    return rows, cols


def scale_invariant_loss_oracle(pred, target, lam):
    """Straight-line reimplementation of the loss formula with plain loops."""
    psis = []
    for p, t in zip(np.asarray(pred).ravel(), np.asarray(target).ravel()):
        if t > 0:
            psis.append(np.log(p) - np.log(t))
    n = len(psis)
    sum_sq = sum(ps * ps for ps in psis)
    total = sum(psis)
    radicand = sum_sq / n - lam * total * total / (n * n)
    return float(np.sqrt(max(radicand, 0.0)))


def mae_oracle(pred, gt, known):
    """Per-pixel loop over the extrapolated region."""
    total = 0.0
    count = 0
    h, w = np.asarray(gt).shape
    for y in range(h):
        for x in range(w):
            if not known[y, x] and gt[y, x] > 0:
                total += abs(pred[y, x] - gt[y, x])
                count += 1
    return (total / count if count else None), count


def corner_aligned_box_setup(width: int = 64, height: int = 48):
    """A box room and center camera whose 90-degree frustum edges meet the
    wall corners exactly.

    With fx = width / 2 each orbit view of a 4 x 90-degree trajectory sees
    exactly one fronto-parallel wall (constant planar depth), points from
    adjacent walls fall outside the image bounds, and the floor/ceiling are
    never hit, which makes the analytic depth of every view a constant.
    """
    from scenegeom.worlds import BoxWorld

    f = width / 2.0
    intr = Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)
    # y extent chosen so even 5-degree support cameras cannot see past the walls
    world = BoxWorld(lo=np.array([-3.0, -2.5, -3.0]), hi=np.array([3.0, 2.5, 3.0]))
    return world, Camera(intr, Pose.identity())


def gradient_oracle(values: np.ndarray) -> np.ndarray:
    """Forward differences, backward at the far edge, max of |gx| and |gy|."""
    h, w = values.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = values[y, x + 1] - values[y, x] if x + 1 < w else values[y, x] - values[y, x - 1]
            gy = values[y + 1, x] - values[y, x] if y + 1 < h else values[y, x] - values[y - 1, x]
            out[y, x] = max(abs(gx), abs(gy))
    return out
