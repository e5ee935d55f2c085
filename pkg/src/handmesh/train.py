"""Training loop: per-sample tapes, batched Adam steps, a one-drop lr
schedule, and deterministic per-epoch logging.

Gradients accumulate additively across the samples of a batch, each
sample contributing its loss scaled by 1/batch, so one optimizer step per
batch sees the mean-loss gradient.  Log lines use repr floats, which
makes two runs with the same seed byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor, backward, scale
from .autodiff.optim import Adam
from .checkpoint import save_checkpoint
from .config import RunConfig
from .errors import DataError, TrainingDiverged
from .losses import compute_losses
from .model import HandMeshNet


@dataclass
class EpochStats:
    epoch: int  # 1-based
    lr: float
    l2d: float
    l3d: float
    lv: float
    total: float

    def format(self) -> str:
        return (
            f"epoch={self.epoch} lr={self.lr!r} l2d={self.l2d!r} "
            f"l3d={self.l3d!r} lv={self.lv!r} total={self.total!r}"
        )


@dataclass
class TrainResult:
    log_lines: list
    history: list  # EpochStats per epoch
    final_path: Path = None
    best_path: Path = None
    initial_total: float = float("nan")
    final_total: float = float("nan")


def lr_for_epoch(epoch: int, cfg: RunConfig) -> float:
    """Learning rate for a 1-based epoch: drops once after the boundary."""
    return cfg.lr if epoch <= cfg.drop_epoch() else cfg.lr_after


def _first_bad_tensor(net: HandMeshNet) -> str:
    for name, tensor in net.named_parameters():
        if not np.all(np.isfinite(tensor.data)):
            return name
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            return f"{name}.grad"
    return "loss"


def train(
    net: HandMeshNet,
    samples,
    cfg: RunConfig,
    out_dir=None,
    log=None,
) -> TrainResult:
    """Optimize net on the samples per the config's schedule.

    ``log`` is an optional callable receiving each finished log line.
    When ``out_dir`` is given, writes checkpoint_final.ckpt,
    checkpoint_best.ckpt (lowest epoch loss), and train_log.txt.
    """
    samples = list(samples)
    if not samples:
        raise DataError("no training samples")
    weights = cfg.loss_weights()
    opt = Adam([t for _, t in net.named_parameters()], lr=cfg.lr)
    result = TrainResult(log_lines=[], history=[])
    best_total = float("inf")
    best_state = None

    for epoch in range(1, cfg.epochs + 1):
        opt.lr = lr_for_epoch(epoch, cfg)
        sums = np.zeros(4)  # l2d, l3d, lv, total
        for start in range(0, len(samples), cfg.batch_size):
            batch = samples[start : start + cfg.batch_size]
            net.zero_grads()
            for sample in batch:
                with Tape() as tape:
                    out = net.forward(Tensor(sample.image))
                    total, l2d, l3d, lv = compute_losses(
                        out, sample, weights, cfg.per_point_norm
                    )
                    backward(scale(total, 1.0 / len(batch)), tape)
                values = (l2d.item(), l3d.item(), lv.item(), total.item())
                if not all(np.isfinite(v) for v in values):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}; "
                        f"first bad tensor: {_first_bad_tensor(net)}"
                    )
                sums += values
            opt.step()
        stats = EpochStats(
            epoch=epoch,
            lr=float(opt.lr),
            l2d=float(sums[0] / len(samples)),
            l3d=float(sums[1] / len(samples)),
            lv=float(sums[2] / len(samples)),
            total=float(sums[3] / len(samples)),
        )
        if not np.isfinite(stats.total):
            raise TrainingDiverged(
                f"non-finite epoch mean at epoch {epoch}; "
                f"first bad tensor: {_first_bad_tensor(net)}"
            )
        line = stats.format()
        result.log_lines.append(line)
        result.history.append(stats)
        if log is not None:
            log(line)
        if epoch == 1:
            result.initial_total = stats.total
        result.final_total = stats.total
        if stats.total < best_total:
            best_total = stats.total
            best_state = {
                name: tensor.data.copy() for name, tensor in net.named_parameters()
            }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.final_path = out_dir / "checkpoint_final.ckpt"
        save_checkpoint(result.final_path, net.named_parameters())
        if best_state is not None:
            result.best_path = out_dir / "checkpoint_best.ckpt"
            save_checkpoint(
                result.best_path,
                ((name, Tensor(arr)) for name, arr in best_state.items()),
            )
        (out_dir / "train_log.txt").write_text(
            "\n".join(result.log_lines) + "\n", encoding="utf-8"
        )
    return result
