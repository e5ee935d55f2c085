"""Mesh vertex head and sparse-joint recovery from dense vertices.

The final token stage only covers a fixed number of tokens, so a learned
lift matrix expands tokens to one per mesh vertex.  The vertex tokens are
concatenated with a channel projection of themselves and mapped to 3-D
coordinates.  Sparse joints come from a row-stochastic regressor over the
vertices plus a handful of fingertip vertices appended verbatim, then a
permutation into the reporting order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, linear, matmul, take_rows
from .errors import AssetError, ContractError
from .params import uniform_init, zeros_param


@dataclass
class JointRegressor:
    """Row-stochastic vertex-to-joint mapping plus fingertip vertex picks."""

    matrix: np.ndarray  # rows x vertices, rows sum to one
    tip_indices: tuple[int, ...]
    joint_order: tuple[int, ...] = ()

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.tip_indices = tuple(int(i) for i in self.tip_indices)
        if not self.joint_order:
            self.joint_order = tuple(range(self.num_joints))
        else:
            self.joint_order = tuple(int(i) for i in self.joint_order)
        self.validate()

    @property
    def num_vertices(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_joints(self) -> int:
        return self.matrix.shape[0] + len(self.tip_indices)

    def validate(self):
        if self.matrix.ndim != 2:
            raise AssetError(f"regressor matrix must be 2-D, got {self.matrix.ndim}-D")
        if np.any(self.matrix < 0):
            raise AssetError("regressor matrix has negative weights")
        sums = self.matrix.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > 1e-4)[0]
        if bad.size:
            raise AssetError(
                f"regressor row {bad[0]} sums to {sums[bad[0]]:.6f}, expected 1"
            )
        v = self.num_vertices
        if len(set(self.tip_indices)) != len(self.tip_indices):
            raise AssetError("fingertip vertex indices repeat")
        for i in self.tip_indices:
            if not 0 <= i < v:
                raise AssetError(f"fingertip vertex index {i} outside 0..{v - 1}")
        n = self.num_joints
        if sorted(self.joint_order) != list(range(n)):
            raise AssetError(f"joint order is not a permutation of 0..{n - 1}")


def load_regressor(path, tip_indices, joint_order=()) -> JointRegressor:
    """Read a regressor matrix asset and pair it with configured indices.

    The file holds only the matrix: a ``rows cols`` header line, then
    ``rows`` lines of row-major values.  Fingertip vertex indices and the
    joint output order live in the run config, not the asset.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise AssetError(f"regressor file {path} is empty")
    try:
        rows, cols = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise AssetError(f"bad regressor header {lines[0]!r} in {path}") from None
    if len(lines) < 1 + rows:
        raise AssetError(f"regressor file {path} truncated")
    matrix = np.zeros((rows, cols))
    for r in range(rows):
        vals = lines[1 + r].split()
        if len(vals) != cols:
            raise AssetError(f"regressor row {r} has {len(vals)} values, expected {cols}")
        matrix[r] = [float(v) for v in vals]
    return JointRegressor(
        matrix=matrix, tip_indices=tuple(tip_indices), joint_order=tuple(joint_order)
    )


def save_regressor_matrix(path, matrix: np.ndarray):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        rows, cols = matrix.shape
        fh.write(f"{rows} {cols}\n")
        for r in range(rows):
            fh.write(" ".join(repr(float(v)) for v in matrix[r]) + "\n")


def synthetic_regressor(
    num_joints: int, num_vertices: int, n_tips: int = 5, seed: int = 0
) -> JointRegressor:
    """Build a plausible stand-in regressor for tests and synthetic data.

    Each matrix row averages a small random neighbourhood of vertices; the
    fingertip picks are spread across the vertex range.  This is a
    placeholder with the right structure, not anatomy.
    """
    rows = num_joints - n_tips
    if rows <= 0:
        raise AssetError(f"{num_joints} joints cannot include {n_tips} fingertips")
    rng = np.random.default_rng(seed)
    matrix = np.zeros((rows, num_vertices))
    support = max(1, min(8, num_vertices // max(rows, 1)))
    for r in range(rows):
        picks = rng.choice(num_vertices, size=support, replace=False)
        weights = rng.uniform(0.5, 1.5, size=support)
        matrix[r, picks] = weights / weights.sum()
    if n_tips > 0:
        step = num_vertices // (n_tips + 1)
        tips = tuple(min(num_vertices - 1, (i + 1) * step) for i in range(n_tips))
        if len(set(tips)) != n_tips:  # tiny meshes: fall back to the last vertices
            tips = tuple(range(num_vertices - n_tips, num_vertices))
    else:
        tips = ()
    return JointRegressor(matrix=matrix, tip_indices=tips)


@dataclass
class MeshVertices:
    """Per-vertex latent tokens and the 3-D coordinates decoded from them."""

    tokens: Tensor  # V x C
    coords: Tensor  # V x 3


@dataclass
class MeshHeadParams:
    lift: Tensor  # vertices x tokens
    chan_weight: Tensor  # 2C x C
    chan_bias: Tensor
    coord_weight: Tensor  # C x 3
    coord_bias: Tensor


def init_mesh_head(num_vertices: int, num_tokens: int, channels: int, rng) -> MeshHeadParams:
    return MeshHeadParams(
        lift=uniform_init(rng, (num_vertices, num_tokens), num_tokens),
        chan_weight=uniform_init(rng, (2 * channels, channels), 2 * channels),
        chan_bias=zeros_param(channels),
        coord_weight=uniform_init(rng, (channels, 3), channels),
        coord_bias=zeros_param(3),
    )


def mesh_forward(joints: Tensor, skeleton: Tensor, params: MeshHeadParams) -> MeshVertices:
    """Turn the last token stage into per-vertex tokens and 3-D coordinates.

    The two branches are concatenated along channels, a learned lift matrix
    expands tokens to one row per vertex, and two linear layers produce the
    vertex tokens and their coordinates.
    """
    if joints.shape != skeleton.shape:
        raise ContractError(
            f"token branches disagree: {joints.shape} vs {skeleton.shape}"
        )
    t, c = joints.shape
    if params.lift.shape[1] != t or params.chan_weight.shape[0] != 2 * c:
        raise ContractError(
            f"mesh head expects {params.lift.shape[1]} tokens of "
            f"{params.chan_weight.shape[0] // 2} channels, got {t} of {c}"
        )
    combined = concat([joints, skeleton], axis=1)  # T x 2C
    lifted = matmul(params.lift, combined)  # V x 2C
    tokens = linear(lifted, params.chan_weight, params.chan_bias)  # V x C
    coords = linear(tokens, params.coord_weight, params.coord_bias)
    return MeshVertices(tokens=tokens, coords=coords)


def joints3d_forward(vertices: Tensor, regressor: JointRegressor) -> Tensor:
    """Regress sparse joints from vertices and append fingertip vertices."""
    if vertices.shape[0] != regressor.num_vertices:
        raise ContractError(
            f"regressor covers {regressor.num_vertices} vertices, mesh has {vertices.shape[0]}"
        )
    body = matmul(Tensor(regressor.matrix), vertices)
    if regressor.tip_indices:
        tips = take_rows(vertices, np.array(regressor.tip_indices, dtype=np.int64))
        joints = concat([body, tips], axis=0)
    else:
        joints = body
    order = np.array(regressor.joint_order, dtype=np.int64)
    if np.array_equal(order, np.arange(order.size)):
        return joints
    return take_rows(joints, order)


def warn_if_implausible(vertices: np.ndarray, limit: float = 1.0):
    """Flag meshes whose bounding box is wildly off hand scale (meters)."""
    span = vertices.max(axis=0) - vertices.min(axis=0)
    largest = float(span.max())
    if largest > limit:
        warnings.warn(
            f"mesh bounding box spans {largest:.3f} m, beyond plausible hand size",
            RuntimeWarning,
            stacklevel=2,
        )
