"""Run configuration: a flat key=value text format over dataclass defaults.

A config file only lists the keys it overrides; everything else keeps the
built-in default, so a desk-scale file stays a handful of lines.  An
``include = other.cfg`` line pulls in another file first (relative to the
including file).  Unknown keys are errors, not warnings.  Environment
variables override exactly two keys: HANDMESH_DATA_ROOT and
HANDMESH_ASSET_ROOT.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .losses import PER_POINT_NORMS, LossWeights
from .metrics import PA_MODES
from .model import DEFAULT_STAGE_CHANNELS, ModelConfig

ENV_DATA_ROOT = "HANDMESH_DATA_ROOT"
ENV_ASSET_ROOT = "HANDMESH_ASSET_ROOT"

# desk-scale profile used when no config file is named; the full-scale
# profile sits next to it and must be selected explicitly
DEFAULT_CONFIG_PATH = Path(__file__).parent / "configs" / "desk.cfg"
FULL_CONFIG_PATH = Path(__file__).parent / "configs" / "full.cfg"


@dataclass
class RunConfig:
    # model
    image_size: int = 224
    backbone_channels: tuple = DEFAULT_STAGE_CHANNELS
    num_joints: int = 21
    num_vertices: int = 778
    stage1_channels: int = 256
    heads: int = 8
    num_tips: int = 5
    fusion: bool = True
    skeleton_refine: bool = True
    seed: int = 0
    # loss
    k2d: float = 1.0
    k3d: float = 10.0
    kv: float = 10.0
    per_point_norm: str = "l1"
    # optimizer: constant lr, dropping once at the boundary epoch
    lr: float = 5e-4
    lr_after: float = 5e-5
    epochs: int = 200
    lr_drop_epoch: int = -1  # -1 means halfway
    batch_size: int = 8
    # data and assets
    data_root: str = ""
    asset_root: str = ""
    train_manifest: str = ""
    eval_manifest: str = ""
    regressor_path: str = ""
    faces_path: str = ""
    tip_indices: tuple = ()
    joint_order: tuple = ()
    # metrics
    pa_mode: str = "mean_euclidean"
    align_fscore: bool = True
    f_thresholds: tuple = (5.0, 15.0)
    workers: int = 1
    # bench
    bench_iters: int = 100
    bench_warmup: int = 10

    def drop_epoch(self) -> int:
        return self.epochs // 2 if self.lr_drop_epoch < 0 else self.lr_drop_epoch

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0 or self.lr_after <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0 <= self.drop_epoch() <= self.epochs:
            raise ConfigError(
                f"lr_drop_epoch {self.drop_epoch()} outside [0, {self.epochs}]"
            )
        if self.per_point_norm not in PER_POINT_NORMS:
            raise ConfigError(
                f"per_point_norm must be one of {PER_POINT_NORMS}, "
                f"got {self.per_point_norm!r}"
            )
        if self.pa_mode not in PA_MODES:
            raise ConfigError(f"pa_mode must be one of {PA_MODES}, got {self.pa_mode!r}")
        for tau in self.f_thresholds:
            if tau <= 0:
                raise ConfigError(f"f_threshold {tau} must be positive")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.bench_iters < 1 or self.bench_warmup < 0:
            raise ConfigError("bench_iters must be >= 1 and bench_warmup >= 0")
        LossWeights(self.k2d, self.k3d, self.kv)  # raises on negatives
        self.model_config()  # validates architecture numbers
        for label, p in (
            ("regressor_path", self.regressor_path),
            ("faces_path", self.faces_path),
        ):
            if p and not self.resolve_asset(p).exists():
                raise ConfigError(f"{label} {self.resolve_asset(p)} does not exist")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size,
            backbone_channels=self.backbone_channels,
            num_joints=self.num_joints,
            num_vertices=self.num_vertices,
            stage1_channels=self.stage1_channels,
            heads=self.heads,
            num_tips=self.num_tips,
            fusion=self.fusion,
            skeleton_refine=self.skeleton_refine,
            seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.k2d, self.k3d, self.kv)

    def _resolve(self, path, root: str) -> Path:
        path = Path(path)
        if root and not path.is_absolute():
            return Path(root) / path
        return path

    def resolve_data(self, path) -> Path:
        return self._resolve(path, self.data_root)

    def resolve_asset(self, path) -> Path:
        return self._resolve(path, self.asset_root)


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    try:
        if kind is bool:
            if text.lower() not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {text!r}")
            return _BOOL_WORDS[text.lower()]
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            if not text:
                return ()
            return tuple(
                float(tok) if ("." in tok or "e" in tok.lower()) else int(tok)
                for tok in text.replace(",", " ").split()
            )
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {name}: {exc}") from None


def parse_config_text(text: str, base: RunConfig = None, origin: Path = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    kinds = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no} has no '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "include":
            inc = Path(value)
            if origin is not None and not inc.is_absolute():
                inc = origin.parent / inc
            cfg = load_config(inc, base=cfg)
            continue
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r} on line {line_no}")
        setattr(cfg, key, _parse_value(key, value, kinds[key]))
    return cfg


def load_config(path=None, base: RunConfig = None) -> RunConfig:
    """Config from a file, with environment root overrides applied.

    When no path is given the packaged desk profile is used, so every
    command runs out of the box at desk scale.
    """
    cfg = base if base is not None else RunConfig()
    if path is None and base is None:
        path = DEFAULT_CONFIG_PATH
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        cfg = parse_config_text(path.read_text(encoding="utf-8"), cfg, origin=path)
    if os.environ.get(ENV_DATA_ROOT):
        cfg.data_root = os.environ[ENV_DATA_ROOT]
    if os.environ.get(ENV_ASSET_ROOT):
        cfg.asset_root = os.environ[ENV_ASSET_ROOT]
    return cfg


def build_regressor(cfg: RunConfig):
    """The configured regressor asset, or a seeded synthetic stand-in."""
    from .mesh import load_regressor, synthetic_regressor

    if cfg.regressor_path:
        tips = tuple(int(i) for i in cfg.tip_indices)
        if len(tips) != cfg.num_tips:
            raise ConfigError(
                f"config names {len(tips)} tip_indices but num_tips is {cfg.num_tips}"
            )
        order = tuple(int(i) for i in cfg.joint_order)
        return load_regressor(cfg.resolve_asset(cfg.regressor_path), tips, order)
    return synthetic_regressor(
        cfg.num_joints, cfg.num_vertices, cfg.num_tips, seed=cfg.seed
    )
