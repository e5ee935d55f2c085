"""Full network: backbone, 2D head, token expansion, interaction, mesh.

The assembly is a straight pipeline.  An image becomes a coarse feature
map, a linear head reads 2-D keypoints off it, a transposed convolution
and bilinear sampling at those keypoints produce joint and skeleton
tokens, three interaction blocks with token upsampling in between refine
them, and the mesh head decodes vertices from the last stage.  Sparse
3-D joints are regressed from the vertices, never the other way around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .backbone import (
    DEFAULT_STAGE_CHANNELS,
    BackboneConfig,
    BackboneParams,
    backbone_forward,
    init_backbone,
)
from .errors import ConfigError, ContractError
from .heads import (
    ExpansionParams,
    Keypoint2DParams,
    default_parents,
    expansion_forward,
    init_expansion,
    init_keypoint_head,
    keypoints2d_forward,
    validate_parents,
)
from .interaction import (
    BlockParams,
    UpsampleParams,
    init_block,
    init_upsample,
    interaction_block_forward,
    token_upsample,
)
from .mesh import (
    JointRegressor,
    MeshHeadParams,
    MeshVertices,
    init_mesh_head,
    joints3d_forward,
    mesh_forward,
    synthetic_regressor,
)
from .params import named_parameters, parameter_count, zero_all_grads

# Head-and-token parameter count reported by the original design; printed
# for comparison only, never asserted (our backbone is deliberately small).
REFERENCE_PARAM_BUDGET = 1_910_000

NUM_STAGES = 3
TOKEN_GROWTH = 4  # every upsample splits one token into four


@dataclass
class ModelConfig:
    """Hyperparameters of the network; defaults give the full-size model."""

    image_size: int = 224
    backbone_channels: tuple = DEFAULT_STAGE_CHANNELS
    num_joints: int = 21
    num_vertices: int = 778
    stage1_channels: int = 256
    heads: int = 8
    num_tips: int = 5
    fusion: bool = True
    skeleton_refine: bool = True
    parents: tuple = ()
    seed: int = 0

    def __post_init__(self):
        self.backbone_channels = tuple(int(c) for c in self.backbone_channels)
        if self.parents:
            self.parents = validate_parents(self.parents, self.num_joints)
        else:
            self.parents = default_parents(self.num_joints)
        self.validate()

    def validate(self):
        BackboneConfig(
            stage_channels=self.backbone_channels, input_size=self.image_size
        ).validate()
        if self.num_joints < 1:
            raise ConfigError(f"num_joints must be positive, got {self.num_joints}")
        if self.num_vertices < 1:
            raise ConfigError(f"num_vertices must be positive, got {self.num_vertices}")
        if not 0 <= self.num_tips < self.num_joints:
            raise ConfigError(
                f"num_tips {self.num_tips} must leave at least one regressed joint"
            )
        if self.stage1_channels % 4 != 0:
            raise ConfigError(
                f"stage1_channels {self.stage1_channels} must halve twice cleanly"
            )
        for c in self.stage_channels():
            if c % self.heads != 0:
                raise ConfigError(
                    f"stage width {c} not divisible by {self.heads} heads"
                )

    def stage_channels(self) -> tuple:
        c = self.stage1_channels
        return tuple(c // (2**i) for i in range(NUM_STAGES))

    def stage_tokens(self) -> tuple:
        return tuple(self.num_joints * TOKEN_GROWTH**i for i in range(NUM_STAGES))

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            stage_channels=self.backbone_channels, input_size=self.image_size
        )


@dataclass
class NetParams:
    backbone: BackboneParams
    keypoint: Keypoint2DParams
    expansion: ExpansionParams
    blocks: list  # one BlockParams per stage
    upsamples: list  # one UpsampleParams per stage boundary
    mesh: MeshHeadParams


@dataclass
class ModelOutput:
    """Everything the forward pass produces, coarse to fine."""

    kp2d: Tensor  # J x 2, nominally in [0, 1]
    joints3d: Tensor  # J x 3, meters, root-relative
    vertices: Tensor  # V x 3
    mesh: MeshVertices
    backbone_features: Tensor
    stage_tokens: list = field(default_factory=list)  # (joints, skeleton) per stage


class HandMeshNet:
    """The trainable network.  Holds parameters; forward passes are pure."""

    def __init__(self, config: ModelConfig = None, regressor: JointRegressor = None):
        self.config = config if config is not None else ModelConfig()
        cfg = self.config
        if regressor is None:
            regressor = synthetic_regressor(
                cfg.num_joints, cfg.num_vertices, cfg.num_tips, seed=cfg.seed
            )
        if regressor.num_vertices != cfg.num_vertices:
            raise ConfigError(
                f"regressor covers {regressor.num_vertices} vertices, "
                f"config says {cfg.num_vertices}"
            )
        if regressor.num_joints != cfg.num_joints:
            raise ConfigError(
                f"regressor yields {regressor.num_joints} joints, "
                f"config says {cfg.num_joints}"
            )
        self.regressor = regressor
        rng = np.random.default_rng(cfg.seed)
        bcfg = cfg.backbone_config()
        widths = cfg.stage_channels()
        self.params = NetParams(
            backbone=init_backbone(bcfg, rng),
            keypoint=init_keypoint_head(bcfg.feature_dim, cfg.num_joints, rng),
            expansion=init_expansion(bcfg.output_channels, cfg.stage1_channels, rng),
            blocks=[init_block(c, cfg.heads, rng) for c in widths],
            upsamples=[init_upsample(c, rng) for c in widths[:-1]],
            mesh=init_mesh_head(
                cfg.num_vertices, cfg.stage_tokens()[-1], widths[-1], rng
            ),
        )

    def forward(self, image: Tensor) -> ModelOutput:
        cfg = self.config
        fb = backbone_forward(image, self.params.backbone, cfg.backbone_config())
        kp2d = keypoints2d_forward(fb, self.params.keypoint, cfg.num_joints)
        j, s = expansion_forward(fb, kp2d, self.params.expansion, cfg.parents)
        stage_tokens = []
        for i, block in enumerate(self.params.blocks):
            j, s = interaction_block_forward(
                j,
                s,
                block,
                cfg.heads,
                fusion=cfg.fusion,
                refine_skeleton=cfg.skeleton_refine,
            )
            stage_tokens.append((j, s))
            if i < len(self.params.upsamples):
                j, s = token_upsample(j, s, self.params.upsamples[i])
        mesh = mesh_forward(j, s, self.params.mesh)
        joints3d = joints3d_forward(mesh.coords, self.regressor)
        return ModelOutput(
            kp2d=kp2d,
            joints3d=joints3d,
            vertices=mesh.coords,
            mesh=mesh,
            backbone_features=fb,
            stage_tokens=stage_tokens,
        )

    __call__ = forward

    def upsample_stage(self, joints: Tensor, skeleton: Tensor, stage: int):
        """Upsample tokens leaving stage ``stage`` (1-based).  The last stage
        has no successor, so asking for it is a caller bug."""
        if not 1 <= stage < NUM_STAGES + 1:
            raise ContractError(f"stage {stage} outside 1..{NUM_STAGES}")
        if stage == NUM_STAGES:
            raise ContractError(f"stage {NUM_STAGES} is final and cannot upsample")
        return token_upsample(joints, skeleton, self.params.upsamples[stage - 1])

    def named_parameters(self):
        return named_parameters(self.params)

    def parameter_counts(self) -> tuple:
        """(head_only, total): head_only excludes the backbone."""
        total = parameter_count(self.params)
        backbone = parameter_count(self.params.backbone)
        return total - backbone, total

    def zero_grads(self):
        zero_all_grads(self.params)
