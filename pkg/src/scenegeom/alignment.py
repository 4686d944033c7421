"""Global scale-and-shift depth alignment and the depth-snapping filter.

Alignment fits s * pred + t to a sparse reference over the pixels valid in
both maps. The closed form minimizes the squared error; the iterative
optimizer descends the mean absolute error with Adam (learning rate 0.01,
at most 100 steps, stopping early after 10 steps without improvement, by
default) and returns the best iterate seen. The MAE subgradient uses
sign(0) = 0.

Snapping reassigns pixels whose depth gradient exceeds a threshold to the
value of their nearest below-threshold pixel, turning soft depth edges into
hard boundaries so lifted points stop smearing between objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scenegeom.rasters import DepthMap, gradient_magnitude, nearest_valid_indices

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AlignConfig:
    learning_rate: float = 0.01
    max_steps: int = 100
    patience: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass(frozen=True)
class SnapConfig:
    """gradient_threshold is meters per pixel; None selects a per-image
    default of 0.05 * median(depth). max_region_radius limits how far a
    pixel may be from the plateau it snaps to; None means unlimited."""

    gradient_threshold: float | None = None
    max_region_radius: float | None = None

    def __post_init__(self):
        if self.gradient_threshold is not None and self.gradient_threshold <= 0:
            raise ValueError("gradient_threshold must be positive")
        if self.max_region_radius is not None and self.max_region_radius <= 0:
            raise ValueError("max_region_radius must be positive")


def _joint_values(pred: DepthMap, sparse: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    if pred.values.shape != sparse.values.shape:
        raise ValueError("pred and sparse shapes differ")
    joint = (pred.values > 0) & (sparse.values > 0)
    if joint.sum() < 2:
        raise ValueError("need at least 2 jointly valid pixels to align")
    x = pred.values[joint]
    y = sparse.values[joint]
    if np.ptp(x) == 0:
        raise ValueError("degenerate alignment: prediction is constant on joint pixels")
    return x, y


def align_closed_form(pred: DepthMap, sparse: DepthMap) -> tuple[float, float]:
    """Least-squares (scale, shift) minimizing sum((s*pred + t - sparse)^2)."""
    x, y = _joint_values(pred, sparse)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    s = ((x - xm) * (y - ym)).sum() / sxx
    return float(s), float(ym - s * xm)


def mae_objective_and_gradient(
    s: float, t: float, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean |s*x + t - y| and its subgradient in (s, t); sign(0) = 0."""
    r = s * x + t - y
    sg = np.sign(r)
    return float(np.abs(r).mean()), np.array([(sg * x).mean(), sg.mean()])


def align_iterative(
    pred: DepthMap, sparse: DepthMap, cfg: AlignConfig = AlignConfig()
) -> tuple[float, float]:
    """Adam descent on the mean absolute alignment error, from (1, 0)."""
    x, y = _joint_values(pred, sparse)
    params = np.array([1.0, 0.0])
    m = np.zeros(2)
    v = np.zeros(2)
    best_obj = np.inf
    best = params.copy()
    stalled = 0
    for step in range(1, cfg.max_steps + 1):
        obj, grad = mae_objective_and_gradient(params[0], params[1], x, y)
        if obj < best_obj:
            best_obj = obj
            best = params.copy()
            stalled = 0
        else:
            stalled += 1
            if stalled >= cfg.patience:
                break
        m = _ADAM_BETA1 * m + (1 - _ADAM_BETA1) * grad
        v = _ADAM_BETA2 * v + (1 - _ADAM_BETA2) * grad**2
        m_hat = m / (1 - _ADAM_BETA1**step)
        v_hat = v / (1 - _ADAM_BETA2**step)
        params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
    return float(best[0]), float(best[1])


def default_gradient_threshold(depth: DepthMap) -> float:
    """Relative per-image default: 5% of the median valid depth."""
    valid = depth.values[depth.values > 0]
    if valid.size == 0:
        raise ValueError("depth has no valid pixels")
    return 0.05 * float(np.median(valid))


def snap_depth(depth: DepthMap, cfg: SnapConfig = SnapConfig()) -> DepthMap:
    """Reassign high-gradient pixels to their nearest low-gradient value.

    Below-threshold pixels are untouched; every snapped pixel takes the
    exact value of its nearest (Euclidean, scanline tie-break) low-gradient
    pixel, so no new depth values are introduced.
    """
    threshold = cfg.gradient_threshold
    if threshold is None:
        threshold = default_gradient_threshold(depth)
    above = gradient_magnitude(depth) > threshold
    if not above.any():
        return DepthMap(depth.values)
    if above.all():
        raise ValueError("every pixel exceeds the gradient threshold; nothing to snap to")
    rows, cols = nearest_valid_indices(~above)
    out = depth.values.copy()
    snap_to = depth.values[rows, cols]
    if cfg.max_region_radius is not None:
        yy, xx = np.indices(above.shape)
        dist2 = (rows - yy) ** 2 + (cols - xx) ** 2
        above = above & (dist2 <= cfg.max_region_radius**2)
    out[above] = snap_to[above]
    return DepthMap(out)
