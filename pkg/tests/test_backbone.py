"""Backbone: stage geometry, shape errors, and the default contract."""

import numpy as np
import pytest

from handmesh.backbone import (
    DEFAULT_STAGE_CHANNELS,
    BackboneConfig,
    backbone_forward,
    init_backbone,
)
from handmesh.errors import ConfigError, ShapeError

from _helpers import check_op_gradients


def make(config, seed=0):
    return init_backbone(config, np.random.default_rng(seed))


class TestConfig:
    def test_default_geometry(self):
        cfg = BackboneConfig()
        assert cfg.stage_channels == DEFAULT_STAGE_CHANNELS
        assert cfg.output_channels == 640
        assert cfg.output_size == 7
        assert cfg.feature_dim == 640 * 7 * 7

    def test_input_not_divisible_rejected(self):
        with pytest.raises(ConfigError):
            BackboneConfig(stage_channels=(4, 8), input_size=10).validate()

    def test_nonpositive_channels_rejected(self):
        with pytest.raises(ConfigError):
            BackboneConfig(stage_channels=(4, 0), input_size=8).validate()

    def test_small_config_allowed(self):
        cfg = BackboneConfig(stage_channels=(4, 8), input_size=8)
        cfg.validate()
        assert cfg.output_size == 2


class TestForward:
    def test_default_output_shape(self):
        cfg = BackboneConfig()
        params = make(cfg)
        img = np.random.default_rng(1).uniform(0, 1, (3, 224, 224))
        from handmesh.autodiff import Tensor

        out = backbone_forward(Tensor(img), params, cfg)
        assert out.shape == (640, 7, 7)

    def test_each_stage_halves_resolution(self):
        from handmesh.autodiff import Tensor

        cfg = BackboneConfig(stage_channels=(4, 8, 16), input_size=32)
        params = make(cfg)
        img = np.random.default_rng(2).uniform(0, 1, (3, 32, 32))
        out = backbone_forward(Tensor(img), params, cfg)
        assert out.shape == (16, 4, 4)

    def test_wrong_shape_raises(self):
        from handmesh.autodiff import Tensor

        cfg = BackboneConfig(stage_channels=(4, 8), input_size=8)
        params = make(cfg)
        with pytest.raises(ShapeError):
            backbone_forward(Tensor(np.zeros((3, 16, 16))), params, cfg)
        with pytest.raises(ShapeError):
            backbone_forward(Tensor(np.zeros((1, 8, 8))), params, cfg)

    def test_output_nonnegative_after_relu(self):
        from handmesh.autodiff import Tensor

        cfg = BackboneConfig(stage_channels=(4, 8), input_size=8)
        params = make(cfg)
        img = np.random.default_rng(3).uniform(0, 1, (3, 8, 8))
        out = backbone_forward(Tensor(img), params, cfg)
        assert out.numpy().min() >= 0.0

    def test_gradients_flow_to_all_stages(self):
        from handmesh.autodiff import sum_all
        from handmesh.backbone import BackboneParams, StageParams

        cfg = BackboneConfig(stage_channels=(2, 3), input_size=8)
        params = make(cfg, seed=4)
        img = np.random.default_rng(5).uniform(0.1, 0.9, (3, 8, 8))
        arrays = [
            img,
            params.stages[0].kernel.numpy(),
            params.stages[0].bias.numpy(),
            params.stages[1].kernel.numpy(),
            params.stages[1].bias.numpy(),
        ]

        def loss(x, k0, b0, k1, b1):
            p = BackboneParams(stages=[StageParams(k0, b0), StageParams(k1, b1)])
            return sum_all(backbone_forward(x, p, cfg))

        check_op_gradients(loss, arrays)
