"""Evaluation metrics: Procrustes alignment, aligned errors, F-score, FPS.

Alignment follows the classical similarity-transform least-squares
solution (centered covariance SVD with a determinant sign fix), so the
recovered rotation is always a proper rotation even when a reflection
would fit better.  Errors are reported in millimeters; inputs are meters.
All nearest-neighbour work is exact brute force since point sets stay
below a thousand points.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError

DEGENERATE_SINGULAR_TOL = 1e-12


@dataclass
class Alignment:
    rotation: np.ndarray  # 3x3, proper
    scale: float
    translation: np.ndarray  # 3-vector
    degenerate: bool = False


def _check_points(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"point sets differ: {pred.shape} vs {gt.shape}")
    if pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"expected N x 3 points, got {pred.shape}")
    if pred.shape[0] < 3:
        raise ContractError(f"need at least 3 points to align, got {pred.shape[0]}")
    return pred, gt


def umeyama_align(pred, gt) -> Alignment:
    """Best similarity transform (s, R, t) taking pred onto gt."""
    pred, gt = _check_points(pred, gt)
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    xc = pred - mu_p
    yc = gt - mu_g
    var_p = (xc**2).sum() / pred.shape[0]
    if var_p <= 0.0:
        raise ContractError("all prediction points coincide; alignment undefined")
    cov = yc.T @ xc / pred.shape[0]
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[-1] = -1.0
    degenerate = d[1] <= DEGENERATE_SINGULAR_TOL * max(d[0], 1.0)
    if degenerate:
        warnings.warn(
            "degenerate point sets: rotation not uniquely determined",
            RuntimeWarning,
            stacklevel=2,
        )
    rotation = u @ np.diag(s_fix) @ vt
    scale = float((d * s_fix).sum() / var_p)
    translation = mu_g - scale * rotation @ mu_p
    return Alignment(
        rotation=rotation, scale=scale, translation=translation, degenerate=degenerate
    )


def apply_alignment(points, align: Alignment) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return align.scale * points @ align.rotation.T + align.translation


PA_MODES = ("mean_euclidean", "rmse")


def pa_error(pred, gt, mode: str = "mean_euclidean") -> float:
    """Alignment-invariant position error in millimeters."""
    if mode not in PA_MODES:
        raise ContractError(f"mode must be one of {PA_MODES}, got {mode!r}")
    align = umeyama_align(pred, gt)
    moved = apply_alignment(pred, align)
    dists = np.linalg.norm(moved - np.asarray(gt, dtype=np.float64), axis=1)
    if mode == "mean_euclidean":
        err_m = float(dists.mean())
    else:
        err_m = float(np.sqrt((dists**2).mean()))
    return err_m * 1000.0


def fscore(pred, gt, tau_mm: float) -> float:
    """Harmonic mean of distance-thresholded precision and recall (in mm)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.size == 0 or gt.size == 0:
        raise ContractError("fscore needs non-empty point sets")
    if tau_mm <= 0:
        raise ContractError(f"threshold must be positive, got {tau_mm}")
    tau_m = tau_mm / 1000.0
    d = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
    precision = float((d.min(axis=1) <= tau_m).mean())
    recall = float((d.min(axis=0) <= tau_m).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class LatencyStats:
    mean_ms: float
    median_ms: float
    p95_ms: float

    @property
    def fps(self) -> float:
        return 1000.0 / self.median_ms


@dataclass
class MetricsReport:
    """Aggregate evaluation numbers; field names match the text report."""

    pa_mpjpe_mm: float = float("nan")
    pa_mpvpe_mm: float = float("nan")
    f_at: dict = field(default_factory=dict)  # threshold mm -> score
    latency: LatencyStats = None
    num_samples: int = 0
    extras: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        if self.num_samples:
            lines.append(f"num_samples={self.num_samples}")
        if np.isfinite(self.pa_mpjpe_mm):
            lines.append(f"pa_mpjpe_mm={self.pa_mpjpe_mm:.6f}")
        if np.isfinite(self.pa_mpvpe_mm):
            lines.append(f"pa_mpvpe_mm={self.pa_mpvpe_mm:.6f}")
        for tau in sorted(self.f_at):
            lines.append(f"f_at_{tau:g}mm={self.f_at[tau]:.6f}")
        if self.latency is not None:
            lines.append(f"latency_mean_ms={self.latency.mean_ms:.6f}")
            lines.append(f"latency_median_ms={self.latency.median_ms:.6f}")
            lines.append(f"latency_p95_ms={self.latency.p95_ms:.6f}")
            lines.append(f"fps={self.latency.fps:.6f}")
        for key in sorted(self.extras):
            lines.append(f"{key}={self.extras[key]}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "num_samples": self.num_samples,
            "pa_mpjpe_mm": self.pa_mpjpe_mm,
            "pa_mpvpe_mm": self.pa_mpvpe_mm,
            "f_at": {f"{k:g}": v for k, v in sorted(self.f_at.items())},
        }
        if self.latency is not None:
            payload["latency_ms"] = {
                "mean": self.latency.mean_ms,
                "median": self.latency.median_ms,
                "p95": self.latency.p95_ms,
            }
            payload["fps"] = self.latency.fps
        payload.update(self.extras)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def bench_fps(run, iters: int = 100, warmup: int = 10) -> LatencyStats:
    """Time repeated calls of a zero-argument callable, single-threaded."""
    if iters < 1:
        raise ContractError(f"need at least one timed iteration, got {iters}")
    if warmup < 0:
        raise ContractError(f"warmup cannot be negative, got {warmup}")
    for _ in range(warmup):
        run()
    samples = np.zeros(iters)
    for i in range(iters):
        start = time.perf_counter()
        run()
        samples[i] = (time.perf_counter() - start) * 1000.0
    return LatencyStats(
        mean_ms=float(samples.mean()),
        median_ms=float(np.median(samples)),
        p95_ms=float(np.percentile(samples, 95)),
    )


DEFAULT_F_THRESHOLDS = (5.0, 15.0)


def _eval_one(pred_joints, pred_vertices, sample, mode, align_fscore, thresholds):
    out = {
        "mpjpe": pa_error(pred_joints, sample.joints3d, mode),
        "mpvpe": pa_error(pred_vertices, sample.vertices, mode),
    }
    if align_fscore:
        align = umeyama_align(pred_vertices, sample.vertices)
        verts = apply_alignment(pred_vertices, align)
    else:
        verts = pred_vertices
    for tau in thresholds:
        out[tau] = fscore(verts, sample.vertices, tau)
    return out


def evaluate(
    predict,
    samples,
    mode: str = "mean_euclidean",
    align_fscore: bool = True,
    thresholds=DEFAULT_F_THRESHOLDS,
    workers: int = 1,
) -> MetricsReport:
    """Run ``predict`` over samples and aggregate aligned errors.

    ``predict(sample)`` must return (joints3d, vertices) as numpy arrays.
    Worker splits only parallelize prediction; results are keyed by sample
    index and reduced in index order, so the report never depends on the
    number of workers.
    """
    samples = list(samples)
    if not samples:
        raise ContractError("nothing to evaluate")
    if workers < 1:
        raise ContractError(f"workers must be positive, got {workers}")
    results = [None] * len(samples)

    def run_range(indices):
        for i in indices:
            joints, verts = predict(samples[i])
            results[i] = _eval_one(
                joints, verts, samples[i], mode, align_fscore, thresholds
            )

    if workers == 1:
        run_range(range(len(samples)))
    else:
        import threading

        chunks = [range(w, len(samples), workers) for w in range(workers)]
        threads = [
            threading.Thread(target=run_range, args=(chunk,)) for chunk in chunks
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    report = MetricsReport(num_samples=len(samples))
    report.pa_mpjpe_mm = float(np.mean([r["mpjpe"] for r in results]))
    report.pa_mpvpe_mm = float(np.mean([r["mpvpe"] for r in results]))
    for tau in thresholds:
        report.f_at[tau] = float(np.mean([r[tau] for r in results]))
    return report
