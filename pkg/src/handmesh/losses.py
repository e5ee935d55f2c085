"""Supervised point-set losses and their weighted sum.

Each output (2-D keypoints, 3-D joints, vertices) gets a per-point norm
averaged over the set.  The norm is L1 by default (sum of absolute
component differences), switchable to per-point Euclidean.  The 2-D term
operates on normalized crop coordinates so its unit weight is on the same
footing as the metric 3-D terms.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import (
    Tensor,
    absolute,
    add,
    mean_all,
    mul,
    scale,
    sqrt,
    sub,
    sum_all,
    sum_axis,
)
from .errors import ConfigError, ShapeError

PER_POINT_NORMS = ("l1", "l2")


@dataclass
class LossWeights:
    k2d: float = 1.0
    k3d: float = 10.0
    kv: float = 10.0

    def __post_init__(self):
        for name in ("k2d", "k3d", "kv"):
            v = float(getattr(self, name))
            if v < 0:
                raise ConfigError(f"loss weight {name} must be non-negative, got {v}")
            setattr(self, name, v)


def l1_set_loss(pred: Tensor, gt: Tensor, per_point_norm: str = "l1") -> Tensor:
    """Mean over points of the per-point norm of pred - gt."""
    if pred.shape != gt.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {gt.shape}")
    if per_point_norm not in PER_POINT_NORMS:
        raise ConfigError(f"per_point_norm must be one of {PER_POINT_NORMS}")
    diff = sub(pred, gt)
    if per_point_norm == "l1":
        n = pred.shape[0]
        return scale(sum_all(absolute(diff)), 1.0 / n)
    per_point = sqrt(sum_axis(mul(diff, diff), axis=1))
    return mean_all(per_point)


def total_loss(l2d: Tensor, l3d: Tensor, lv: Tensor, weights: LossWeights) -> Tensor:
    return add(
        add(scale(l2d, weights.k2d), scale(l3d, weights.k3d)), scale(lv, weights.kv)
    )


def compute_losses(output, sample, weights: LossWeights, per_point_norm: str = "l1"):
    """Loss terms for one model output against one sample's annotations.

    Returns (total, l2d, l3d, lv); the sample provides numpy arrays, the
    output provides tensors from a live tape.
    """
    l2d = l1_set_loss(output.kp2d, Tensor(sample.kp2d), per_point_norm)
    l3d = l1_set_loss(output.joints3d, Tensor(sample.joints3d), per_point_norm)
    lv = l1_set_loss(output.vertices, Tensor(sample.vertices), per_point_norm)
    return total_loss(l2d, l3d, lv, weights), l2d, l3d, lv
