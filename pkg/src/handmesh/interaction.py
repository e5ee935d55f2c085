"""Serial feature-interaction blocks over joint and skeleton tokens.

Each block runs both branches through coordinate attention (a sigmoid gate
from a depthwise 1-D convolution over the token axis, plus a residual),
pre-norm multi-head self-attention, and a linear layer; the skeleton
branch then guides the joint branch through a one-way fusion projection,
and both branches finish with an output projection.  Between blocks a
token upsample turns every token into four half-width tokens, walking the
schedule T x C -> 4T x C/2 twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .autodiff import (
    Tensor,
    add,
    concat,
    conv1d_depthwise,
    layer_norm,
    linear,
    matmul,
    mul,
    reshape,
    scale,
    sigmoid,
    slice_cols,
    softmax,
    transpose,
)
from .errors import ConfigError, ContractError
from .params import ones_param, uniform_init, zeros_param


@dataclass
class AttentionParams:
    norm_gain: Tensor
    norm_shift: Tensor
    w_query: Tensor
    w_key: Tensor
    w_value: Tensor
    w_out: Tensor
    out_bias: Tensor


@dataclass
class BranchParams:
    gate_kernel: Tensor  # C x 3 depthwise conv weights
    attention: AttentionParams
    mix_weight: Tensor
    mix_bias: Tensor
    proj_weight: Tensor
    proj_bias: Tensor


@dataclass
class BlockParams:
    joint: BranchParams
    skeleton: BranchParams
    fuse_weight: Tensor
    fuse_bias: Tensor


@dataclass
class UpsampleParams:
    joint_weight: Tensor  # C x 2C (four sub-tokens of C/2 channels each)
    joint_bias: Tensor
    skeleton_weight: Tensor
    skeleton_bias: Tensor


def _init_attention(channels: int, rng) -> AttentionParams:
    return AttentionParams(
        norm_gain=ones_param(channels),
        norm_shift=zeros_param(channels),
        w_query=uniform_init(rng, (channels, channels), channels),
        w_key=uniform_init(rng, (channels, channels), channels),
        w_value=uniform_init(rng, (channels, channels), channels),
        w_out=uniform_init(rng, (channels, channels), channels),
        out_bias=zeros_param(channels),
    )


def _init_branch(channels: int, rng) -> BranchParams:
    return BranchParams(
        gate_kernel=uniform_init(rng, (channels, 3), 3),
        attention=_init_attention(channels, rng),
        mix_weight=uniform_init(rng, (channels, channels), channels),
        mix_bias=zeros_param(channels),
        proj_weight=uniform_init(rng, (channels, channels), channels),
        proj_bias=zeros_param(channels),
    )


def init_block(channels: int, heads: int, rng) -> BlockParams:
    if channels % heads != 0:
        raise ConfigError(f"channels {channels} not divisible by {heads} heads")
    return BlockParams(
        joint=_init_branch(channels, rng),
        skeleton=_init_branch(channels, rng),
        fuse_weight=uniform_init(rng, (channels, channels), channels),
        fuse_bias=zeros_param(channels),
    )


def init_upsample(channels: int, rng) -> UpsampleParams:
    if channels % 2 != 0:
        raise ConfigError(f"cannot halve odd channel count {channels}")
    return UpsampleParams(
        joint_weight=uniform_init(rng, (channels, 2 * channels), channels),
        joint_bias=zeros_param(2 * channels),
        skeleton_weight=uniform_init(rng, (channels, 2 * channels), channels),
        skeleton_bias=zeros_param(2 * channels),
    )


def coord_attention_forward(x: Tensor, gate_kernel: Tensor) -> Tensor:
    """Per-channel sigmoid gating from a token-axis convolution, with residual."""
    gate = sigmoid(conv1d_depthwise(x, gate_kernel, padding=1))
    return add(mul(x, gate), x)


def mhsa_forward(x: Tensor, params: AttentionParams, heads: int) -> Tensor:
    """Pre-norm multi-head self-attention with a residual around the unit."""
    channels = x.shape[1]
    if channels % heads != 0:
        raise ConfigError(f"channels {channels} not divisible by {heads} heads")
    d_k = channels // heads
    normed = layer_norm(x, params.norm_gain, params.norm_shift)
    q = matmul(normed, params.w_query)
    k = matmul(normed, params.w_key)
    v = matmul(normed, params.w_value)
    outputs = []
    inv_sqrt_dk = 1.0 / math.sqrt(d_k)
    for h in range(heads):
        lo, hi = h * d_k, (h + 1) * d_k
        q_h = slice_cols(q, lo, hi)
        k_h = slice_cols(k, lo, hi)
        v_h = slice_cols(v, lo, hi)
        scores = softmax(scale(matmul(q_h, transpose(k_h)), inv_sqrt_dk), axis=-1)
        outputs.append(matmul(scores, v_h))
    merged = concat(outputs, axis=1)
    return add(x, linear(merged, params.w_out, params.out_bias))


def _branch_forward(x: Tensor, params: BranchParams, heads: int) -> Tensor:
    y = coord_attention_forward(x, params.gate_kernel)
    y = mhsa_forward(y, params.attention, heads)
    return linear(y, params.mix_weight, params.mix_bias)


def interaction_block_forward(
    joints: Tensor,
    skeleton: Tensor,
    params: BlockParams,
    heads: int,
    fusion: bool = True,
    refine_skeleton: bool = True,
) -> tuple[Tensor, Tensor]:
    j = _branch_forward(joints, params.joint, heads)
    s = _branch_forward(skeleton, params.skeleton, heads) if refine_skeleton else skeleton
    if fusion:
        j = add(j, linear(s, params.fuse_weight, params.fuse_bias))
    return (
        linear(j, params.joint.proj_weight, params.joint.proj_bias),
        linear(s, params.skeleton.proj_weight, params.skeleton.proj_bias),
    )


def token_upsample(
    joints: Tensor, skeleton: Tensor, params: UpsampleParams
) -> tuple[Tensor, Tensor]:
    """Split every token into four tokens with half the channels."""
    t, c = joints.shape
    if params.joint_weight.shape != (c, 2 * c):
        raise ContractError(
            f"upsample weights {params.joint_weight.shape} do not fit stage channels {c}"
        )
    half = c // 2
    j = linear(joints, params.joint_weight, params.joint_bias)
    s = linear(skeleton, params.skeleton_weight, params.skeleton_bias)
    return reshape(j, (4 * t, half)), reshape(s, (4 * t, half))
