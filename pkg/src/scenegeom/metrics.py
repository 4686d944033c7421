"""Quantitative core: scale-invariant depth loss, extrapolation MAE, overlap.

All reductions run in float64 with numpy's deterministic pairwise summation,
so repeated evaluations of the same inputs produce identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scenegeom.geometry import Camera
from scenegeom.pointcloud import PointCloud, render_depth
from scenegeom.rasters import DepthMap, Mask


@dataclass(frozen=True)
class LossConfig:
    """Weight of the squared-mean term in the scale-invariant loss.

    ``lam`` = 1 makes the loss fully invariant to a global depth scale;
    ``lam`` = 0 reduces it to the RMS of log-depth errors.
    """

    lam: float = 0.85

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")


def scale_invariant_loss(pred: DepthMap, target: DepthMap, cfg: LossConfig = LossConfig()) -> float:
    """Scale-invariant log-depth loss over valid-target pixels.

    With psi = log(pred) - log(target) over the T pixels where the target is
    valid, returns sqrt(mean(psi^2) - lam * (sum(psi))^2 / T^2). The radicand
    is evaluated as var(psi) + (1 - lam) * mean(psi)^2, which is the same
    quantity without the catastrophic cancellation the raw form hits when
    pred is a near-exact rescaling of target; it is also clamped at zero.
    """
    if pred.values.shape != target.values.shape:
        raise ValueError("pred and target shapes differ")
    valid = target.values > 0
    t = int(valid.sum())
    if t == 0:
        raise ValueError("target has no valid pixels")
    p = pred.values[valid]
    if (p <= 0).any():
        raise ValueError("pred must be positive wherever target is valid")
    psi = np.log(p) - np.log(target.values[valid])
    mean = psi.mean()
    radicand = ((psi - mean) ** 2).mean() + (1.0 - cfg.lam) * mean**2
    return float(np.sqrt(max(radicand, 0.0)))


def mae_extrapolated(pred: DepthMap, gt: DepthMap, known: Mask) -> tuple[float | None, int]:
    """Mean absolute depth error over extrapolated pixels.

    Evaluates |pred - gt| where ``known`` is False and the ground truth is
    valid; invalid (zero) predictions inside that region count at face value
    rather than being skipped. Returns (mae, pixel count); mae is None when
    nothing was extrapolated.
    """
    if not pred.values.shape == gt.values.shape == known.values.shape:
        raise ValueError("pred, gt and known shapes differ")
    region = ~known.values & (gt.values > 0)
    count = int(region.sum())
    if count == 0:
        return None, 0
    return float(np.abs(pred.values[region] - gt.values[region]).mean()), count


def overlap(pc: PointCloud, cam: Camera) -> float:
    """Fraction of the camera's pixels covered when rendering the cloud."""
    _, covered = render_depth(pc, cam)
    return float(covered.values.mean())
