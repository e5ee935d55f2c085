"""Small strided convolutional feature extractor.

A stack of 3x3 stride-2 conv+relu stages halves the spatial extent per
stage; the default five-stage stack maps a 3x224x224 crop to a 640x7x7
feature map.  It is a deterministic, trainable stand-in for a large
pretrained backbone and is deliberately simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, conv2d, relu
from .errors import ConfigError, ShapeError
from .params import uniform_init, zeros_param

DEFAULT_STAGE_CHANNELS = (16, 32, 64, 128, 640)


@dataclass
class BackboneConfig:
    stage_channels: tuple = DEFAULT_STAGE_CHANNELS
    input_size: int = 224
    in_channels: int = 3

    def validate(self) -> None:
        if not self.stage_channels or any(c <= 0 for c in self.stage_channels):
            raise ConfigError(f"stage_channels must be positive, got {self.stage_channels}")
        if self.input_size % (2 ** len(self.stage_channels)) != 0:
            raise ConfigError(
                f"input size {self.input_size} is not divisible by "
                f"2^{len(self.stage_channels)} stride-2 stages"
            )

    @property
    def output_channels(self) -> int:
        return self.stage_channels[-1]

    @property
    def output_size(self) -> int:
        return self.input_size // (2 ** len(self.stage_channels))

    @property
    def feature_dim(self) -> int:
        return self.output_channels * self.output_size**2


@dataclass
class StageParams:
    kernel: Tensor
    bias: Tensor


@dataclass
class BackboneParams:
    stages: list = field(default_factory=list)


def init_backbone(config: BackboneConfig, rng: np.random.Generator) -> BackboneParams:
    config.validate()
    params = BackboneParams()
    cin = config.in_channels
    for cout in config.stage_channels:
        fan_in = cin * 9
        params.stages.append(
            StageParams(kernel=uniform_init(rng, (cout, cin, 3, 3), fan_in), bias=zeros_param(cout))
        )
        cin = cout
    return params


def backbone_forward(image: Tensor, params: BackboneParams, config: BackboneConfig) -> Tensor:
    expected = (config.in_channels, config.input_size, config.input_size)
    if image.shape != expected:
        raise ShapeError(f"backbone expects image {expected}, got {image.shape}")
    x = image
    for stage in params.stages:
        x = relu(conv2d(x, stage.kernel, stage.bias, stride=2, padding=1))
    return x
