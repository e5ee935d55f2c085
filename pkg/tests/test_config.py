"""Config parsing: overrides, includes, env roots, validation."""

import numpy as np
import pytest

from handmesh.config import (
    DEFAULT_CONFIG_PATH,
    ENV_ASSET_ROOT,
    ENV_DATA_ROOT,
    FULL_CONFIG_PATH,
    RunConfig,
    build_regressor,
    load_config,
    parse_config_text,
)
from handmesh.errors import ConfigError
from handmesh.mesh import save_regressor_matrix, synthetic_regressor


class TestParsing:
    def test_dataclass_defaults(self):
        cfg = RunConfig()
        assert cfg.image_size == 224
        assert cfg.epochs == 200
        assert cfg.lr == 5e-4
        assert cfg.lr_after == 5e-5
        assert cfg.k3d == 10.0

    def test_desk_profile_is_the_default(self):
        cfg = load_config()
        assert cfg.image_size == 32
        assert cfg.backbone_channels == (8, 16, 32)
        assert cfg.stage1_channels == 64
        assert cfg.epochs == 50
        cfg.validate()

    def test_full_profile_parses_and_validates(self):
        cfg = load_config(FULL_CONFIG_PATH)
        assert cfg.image_size == 224
        assert cfg.backbone_channels == (16, 32, 64, 128, 640)
        assert cfg.batch_size == 32
        cfg.validate()

    def test_packaged_profiles_exist(self):
        assert DEFAULT_CONFIG_PATH.exists()
        assert FULL_CONFIG_PATH.exists()

    def test_overrides_and_comments(self):
        cfg = parse_config_text(
            "# a comment\nimage_size = 32\nlr = 1e-3  # inline\nfusion = false\n"
        )
        assert cfg.image_size == 32
        assert cfg.lr == 1e-3
        assert cfg.fusion is False

    def test_tuple_values(self):
        cfg = parse_config_text("backbone_channels = 8 16 32\nf_thresholds = 5.0, 15.0\n")
        assert cfg.backbone_channels == (8, 16, 32)
        assert cfg.f_thresholds == (5.0, 15.0)

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("seed = 1\nmystery = 4\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("image_size 32\n")

    def test_bad_int_value(self):
        with pytest.raises(ConfigError, match="image_size"):
            parse_config_text("image_size = broad\n")

    def test_include_chain(self, tmp_path):
        (tmp_path / "base.cfg").write_text("image_size = 64\nseed = 4\n")
        main = tmp_path / "main.cfg"
        main.write_text("include = base.cfg\nseed = 9\n")
        cfg = load_config(main)
        assert cfg.image_size == 64  # from include
        assert cfg.seed == 9  # later line wins

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_env_overrides_roots_only(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_DATA_ROOT, "/data/elsewhere")
        monkeypatch.setenv(ENV_ASSET_ROOT, str(tmp_path))
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("data_root = /data/original\nseed = 2\n")
        cfg = load_config(cfg_file)
        assert cfg.data_root == "/data/elsewhere"
        assert cfg.asset_root == str(tmp_path)
        assert cfg.seed == 2  # env never touches other keys


class TestValidation:
    def test_default_config_valid(self):
        RunConfig().validate()

    def test_negative_epochs(self):
        with pytest.raises(ConfigError):
            RunConfig(epochs=0).validate()

    def test_bad_norm(self):
        with pytest.raises(ConfigError):
            RunConfig(per_point_norm="l3").validate()

    def test_bad_pa_mode(self):
        with pytest.raises(ConfigError):
            RunConfig(pa_mode="max").validate()

    def test_negative_loss_weight(self):
        with pytest.raises(ConfigError):
            RunConfig(k3d=-1.0).validate()

    def test_drop_epoch_outside_range(self):
        with pytest.raises(ConfigError):
            RunConfig(epochs=10, lr_drop_epoch=11).validate()

    def test_missing_regressor_asset(self, tmp_path):
        cfg = RunConfig(regressor_path=str(tmp_path / "gone.txt"))
        with pytest.raises(ConfigError, match="regressor_path"):
            cfg.validate()

    def test_resolution_joins_roots(self):
        cfg = RunConfig(data_root="/d", asset_root="/a")
        assert str(cfg.resolve_data("x/manifest.jsonl")) == "/d/x/manifest.jsonl"
        assert str(cfg.resolve_asset("/abs/reg.txt")) == "/abs/reg.txt"


class TestBuildRegressor:
    def test_synthetic_fallback_seeded(self):
        a = build_regressor(RunConfig(num_vertices=30, seed=5))
        b = build_regressor(RunConfig(num_vertices=30, seed=5))
        assert np.array_equal(a.matrix, b.matrix)
        assert a.tip_indices == b.tip_indices

    def test_loads_configured_asset(self, tmp_path):
        reg = synthetic_regressor(6, 20, 2, seed=1)
        path = tmp_path / "reg.txt"
        save_regressor_matrix(path, reg.matrix)
        cfg = RunConfig(
            num_joints=6,
            num_vertices=20,
            num_tips=2,
            regressor_path=str(path),
            tip_indices=reg.tip_indices,
            joint_order=reg.joint_order,
        )
        loaded = build_regressor(cfg)
        assert np.allclose(loaded.matrix, reg.matrix)
        assert loaded.tip_indices == tuple(reg.tip_indices)

    def test_tip_count_mismatch(self, tmp_path):
        reg = synthetic_regressor(6, 20, 2, seed=1)
        path = tmp_path / "reg.txt"
        save_regressor_matrix(path, reg.matrix)
        cfg = RunConfig(
            num_joints=6,
            num_vertices=20,
            num_tips=2,
            regressor_path=str(path),
            tip_indices=(3,),
        )
        with pytest.raises(ConfigError, match="tip_indices"):
            build_regressor(cfg)
