"""Scikit-learn style wrapper around the network and training loop.

HandMeshEstimator keeps its constructor arguments untouched (so cloning
and grid search behave), trains in fit, and exposes prediction plus a
negative-error score.  Targets are passed as a dict of arrays, which
keeps the three supervision signals (2-D keypoints, 3-D joints,
vertices) explicit.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Tensor
from .config import RunConfig
from .dataio import HandSample
from .errors import ContractError
from .mesh import synthetic_regressor
from .metrics import pa_error
from .model import HandMeshNet
from .train import train
from .validation import check_images, check_points

TARGET_KEYS = ("kp2d", "joints3d", "vertices")


class HandMeshEstimator(BaseEstimator):
    """Estimator facade: images in, hand joints (and mesh) out."""

    def __init__(
        self,
        image_size=224,
        backbone_channels=(16, 32, 64, 128, 640),
        num_joints=21,
        num_vertices=778,
        stage1_channels=256,
        heads=8,
        num_tips=5,
        fusion=True,
        skeleton_refine=True,
        epochs=10,
        batch_size=8,
        lr=5e-4,
        lr_after=5e-5,
        lr_drop_epoch=-1,
        per_point_norm="l1",
        k2d=1.0,
        k3d=10.0,
        kv=10.0,
        seed=0,
    ):
        self.image_size = image_size
        self.backbone_channels = backbone_channels
        self.num_joints = num_joints
        self.num_vertices = num_vertices
        self.stage1_channels = stage1_channels
        self.heads = heads
        self.num_tips = num_tips
        self.fusion = fusion
        self.skeleton_refine = skeleton_refine
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_after = lr_after
        self.lr_drop_epoch = lr_drop_epoch
        self.per_point_norm = per_point_norm
        self.k2d = k2d
        self.k3d = k3d
        self.kv = kv
        self.seed = seed

    def _run_config(self) -> RunConfig:
        cfg = RunConfig(
            image_size=self.image_size,
            backbone_channels=tuple(self.backbone_channels),
            num_joints=self.num_joints,
            num_vertices=self.num_vertices,
            stage1_channels=self.stage1_channels,
            heads=self.heads,
            num_tips=self.num_tips,
            fusion=self.fusion,
            skeleton_refine=self.skeleton_refine,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            lr_after=self.lr_after,
            lr_drop_epoch=self.lr_drop_epoch,
            per_point_norm=self.per_point_norm,
            k2d=self.k2d,
            k3d=self.k3d,
            kv=self.kv,
            seed=self.seed,
        )
        cfg.validate()
        return cfg

    def _to_samples(self, X, y) -> list:
        X = check_images(X, self.image_size)
        n = X.shape[0]
        if y is None or not all(k in y for k in TARGET_KEYS):
            raise ContractError(f"fit targets must provide {TARGET_KEYS}")
        kp2d = check_points("kp2d", y["kp2d"], n, self.num_joints, 2)
        joints = check_points("joints3d", y["joints3d"], n, self.num_joints, 3)
        verts = check_points("vertices", y["vertices"], n, self.num_vertices, 3)
        return [
            HandSample(
                image=X[i],
                kp2d=kp2d[i],
                joints3d=joints[i],
                vertices=verts[i],
                id=f"fit_{i}",
            )
            for i in range(n)
        ]

    def fit(self, X, y):
        cfg = self._run_config()
        regressor = synthetic_regressor(
            self.num_joints, self.num_vertices, self.num_tips, seed=self.seed
        )
        self.net_ = HandMeshNet(cfg.model_config(), regressor)
        result = train(self.net_, self._to_samples(X, y), cfg)
        self.history_ = result.history
        self.final_loss_ = result.final_total
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise ContractError("estimator is not fitted; call fit first")

    def _forward(self, image: np.ndarray):
        # no active tape: plain forward, nothing recorded
        return self.net_.forward(Tensor(image))

    def predict(self, X) -> np.ndarray:
        """(n, num_joints, 3) root-relative joint positions in meters."""
        self._check_fitted()
        X = check_images(X, self.image_size)
        return np.stack([self._forward(img).joints3d.numpy() for img in X])

    def predict_full(self, X) -> dict:
        """All network outputs: kp2d, joints3d, vertices, stacked over n."""
        self._check_fitted()
        X = check_images(X, self.image_size)
        outs = [self._forward(img) for img in X]
        return {
            "kp2d": np.stack([o.kp2d.numpy() for o in outs]),
            "joints3d": np.stack([o.joints3d.numpy() for o in outs]),
            "vertices": np.stack([o.vertices.numpy() for o in outs]),
        }

    def score(self, X, y) -> float:
        """Negative mean aligned joint error in millimeters (higher is better)."""
        self._check_fitted()
        preds = self.predict(X)
        gts = check_points(
            "joints3d", y["joints3d"], preds.shape[0], self.num_joints, 3
        )
        errs = [pa_error(p, g) for p, g in zip(preds, gts)]
        return -float(np.mean(errs))
