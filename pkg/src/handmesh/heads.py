"""2D keypoint head and the expansion block.

The keypoint head flattens the backbone feature map and regresses one
(u, v) pair per joint in normalized [0, 1] crop coordinates.  The
expansion block upsamples the feature map with a stride-2 transposed
convolution, bilinearly samples it at the keypoints (mapped to [-1, 1]),
and produces joint tokens plus skeleton tokens built from each joint
paired with its kinematic parent.  The wrist is its own parent, so its
skeleton input row is the wrist sample duplicated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    conv_transpose2d,
    grid_sample_bilinear,
    linear,
    reshape,
    scale,
    sub,
    take_rows,
)
from .errors import ConfigError, ShapeError
from .params import uniform_init, zeros_param

# 21-joint hand tree: wrist root, then four-joint chains for thumb, index,
# middle, ring, little.  Index 0 is the wrist and parents itself.
HAND_PARENTS_21 = (
    0,
    0, 1, 2, 3,
    0, 5, 6, 7,
    0, 9, 10, 11,
    0, 13, 14, 15,
    0, 17, 18, 19,
)


def default_parents(num_joints: int) -> tuple:
    """The standard hand tree for 21 joints, else a simple root chain."""
    if num_joints == 21:
        return HAND_PARENTS_21
    return (0,) + tuple(range(num_joints - 1))


def validate_parents(parents, num_joints: int) -> tuple:
    parents = tuple(int(p) for p in parents)
    if len(parents) != num_joints:
        raise ConfigError(f"parent table needs {num_joints} entries, got {len(parents)}")
    if any(p < 0 or p >= num_joints for p in parents):
        raise ConfigError(f"parent indices out of range in {parents}")
    return parents


@dataclass
class Keypoint2DParams:
    weight: Tensor  # flattened feature dim x 2J
    bias: Tensor


@dataclass
class ExpansionParams:
    up_kernel: Tensor  # backbone channels x token channels x 2 x 2
    up_bias: Tensor
    joint_weight: Tensor  # C x C
    joint_bias: Tensor
    skeleton_weight: Tensor  # 2C x C
    skeleton_bias: Tensor


def init_keypoint_head(feature_dim: int, num_joints: int, rng) -> Keypoint2DParams:
    return Keypoint2DParams(
        weight=uniform_init(rng, (feature_dim, 2 * num_joints), feature_dim),
        bias=zeros_param(2 * num_joints),
    )


def init_expansion(in_channels: int, token_channels: int, rng) -> ExpansionParams:
    c = token_channels
    return ExpansionParams(
        up_kernel=uniform_init(rng, (in_channels, c, 2, 2), in_channels * 4),
        up_bias=zeros_param(c),
        joint_weight=uniform_init(rng, (c, c), c),
        joint_bias=zeros_param(c),
        skeleton_weight=uniform_init(rng, (2 * c, c), 2 * c),
        skeleton_bias=zeros_param(c),
    )


def keypoints2d_forward(f_b: Tensor, params: Keypoint2DParams, num_joints: int) -> Tensor:
    """Backbone features -> J x 2 keypoints via a single linear layer."""
    flat = reshape(f_b, (1, f_b.size))
    if flat.shape[1] != params.weight.shape[0]:
        raise ShapeError(
            f"feature map {f_b.shape} flattens to {flat.shape[1]}, "
            f"head expects {params.weight.shape[0]}"
        )
    out = linear(flat, params.weight, params.bias)
    return reshape(out, (num_joints, 2))


def normalize_coords(f_2d: Tensor) -> Tensor:
    """Affine map of [0, 1] crop coordinates onto the sampler's [-1, 1] grid."""
    return sub(scale(f_2d, 2.0), 1.0)


def parent_pairs(samples: Tensor, parents) -> Tensor:
    """Concatenate each token's sample with its parent's along channels."""
    return concat([samples, take_rows(samples, np.asarray(parents, dtype=np.intp))], axis=1)


def expansion_forward(
    f_b: Tensor, f_2d: Tensor, params: ExpansionParams, parents
) -> tuple[Tensor, Tensor]:
    """Produce stage-1 joint and skeleton token features from F_B and keypoints."""
    fmap = conv_transpose2d(f_b, params.up_kernel, params.up_bias, stride=2)
    sampled = grid_sample_bilinear(fmap, normalize_coords(f_2d))
    joints = linear(sampled, params.joint_weight, params.joint_bias)
    skeleton = linear(parent_pairs(sampled, parents), params.skeleton_weight, params.skeleton_bias)
    return joints, skeleton
