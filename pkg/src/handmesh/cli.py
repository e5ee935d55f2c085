"""Batch command line: train, eval, infer, bench, make-synth,
ingest-freihand, export-obj.

Exit codes: 0 on success, 1 for validation problems (bad flags, bad
config, malformed inputs), 2 for runtime failures (diverged training,
I/O faults mid-run).  Every command validates its full configuration
before touching data or writing anything.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .checkpoint import apply_checkpoint, load_checkpoint
from .config import RunConfig, build_regressor, load_config
from .dataio import (
    export_obj,
    ingest_freihand,
    load_faces,
    load_manifest,
    make_synthetic,
)
from .errors import DataError
from .metrics import MetricsReport, bench_fps, evaluate
from .model import REFERENCE_PARAM_BUDGET, HandMeshNet
from .train import train


class _Parser(argparse.ArgumentParser):
    # bad flags are validation problems: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="handmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument(
            "--config",
            default=None,
            help="key=value config file (default: packaged desk profile)",
        )
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        return p

    p = add("train", "optimize a model on a manifest")
    p.add_argument("--manifest", default=None, help="training manifest path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)

    p = add("eval", "aligned metrics for a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-align", action="store_true", help="raw F-scores")
    p.add_argument("--mode", choices=("mean_euclidean", "rmse"), default=None)
    p.add_argument("--report", default=None, help="write report files (.txt/.json)")

    p = add("infer", "run one image through a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resize", action="store_true", help="resize to the model size")

    p = add("bench", "latency benchmark and parameter counts")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)

    p = add("make-synth", "generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)

    p = add("ingest-freihand", "convert FreiHand-style annotations to a manifest")
    p.add_argument("--xyz", required=True, help="JSON array of Jx3 joints")
    p.add_argument("--verts", required=True, help="JSON array of Vx3 vertices")
    p.add_argument("--k", required=True, help="JSON array of 3x3 intrinsics")
    p.add_argument("--images", default=None, help="directory of images (optional)")
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=0, help="take only the first N")

    p = add("export-obj", "write a mesh OBJ from a vertex text file")
    p.add_argument("--vertices", required=True, help="text file, one x y z per line")
    p.add_argument("--faces", default=None, help="triangle asset (0-based indices)")
    p.add_argument("--out", required=True)
    return parser


def _config_for(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _load_net(cfg: RunConfig, checkpoint=None) -> HandMeshNet:
    net = HandMeshNet(cfg.model_config(), build_regressor(cfg))
    if checkpoint:
        apply_checkpoint(net, load_checkpoint(checkpoint))
    return net


def _predictor(net):
    def predict(sample):
        out = net.forward(Tensor(sample.image))
        return out.joints3d.numpy(), out.vertices.numpy()

    return predict


def cmd_train(args) -> int:
    cfg = _config_for(args)
    if args.manifest:
        cfg.train_manifest = args.manifest
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    cfg.validate()
    if not cfg.train_manifest:
        raise DataError("no training manifest given (--manifest or config)")
    samples = list(load_manifest(cfg.resolve_data(cfg.train_manifest)))
    net = _load_net(cfg)
    result = train(net, samples, cfg, out_dir=args.out, log=print)
    print(f"final_total={result.final_total!r}")
    print(f"checkpoint={result.final_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_for(args)
    if args.manifest:
        cfg.eval_manifest = args.manifest
    if args.workers is not None:
        cfg.workers = args.workers
    if args.mode is not None:
        cfg.pa_mode = args.mode
    if args.no_align:
        cfg.align_fscore = False
    cfg.validate()
    if not cfg.eval_manifest:
        raise DataError("no eval manifest given (--manifest or config)")
    net = _load_net(cfg, args.checkpoint)
    samples = list(load_manifest(cfg.resolve_data(cfg.eval_manifest)))
    report = evaluate(
        _predictor(net),
        samples,
        mode=cfg.pa_mode,
        align_fscore=cfg.align_fscore,
        thresholds=tuple(float(t) for t in cfg.f_thresholds),
        workers=cfg.workers,
    )
    sys.stdout.write(report.to_text())
    if args.report:
        stem = Path(args.report)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
        stem.with_suffix(".json").write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_infer(args) -> int:
    cfg = _config_for(args)
    cfg.validate()
    net = _load_net(cfg, args.checkpoint)
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(args.image) as img:
            img = img.convert("RGB")
            if img.size != (cfg.image_size, cfg.image_size):
                if not args.resize:
                    raise DataError(
                        f"image is {img.size[0]}x{img.size[1]}, expected "
                        f"{cfg.image_size}x{cfg.image_size} (use --resize)"
                    )
                img = img.resize((cfg.image_size, cfg.image_size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float64).transpose(2, 0, 1) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {args.image}: {exc}") from None
    out = net.forward(Tensor(arr))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / "kp2d.txt", out.kp2d.numpy(), fmt="%.8f")
    np.savetxt(out_dir / "joints3d.txt", out.joints3d.numpy(), fmt="%.8f")
    faces = None
    if cfg.faces_path:
        faces = load_faces(cfg.resolve_asset(cfg.faces_path))
    export_obj(out.vertices.numpy(), out_dir / "mesh.obj", faces)
    print(f"outputs written to {out_dir}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config_for(args)
    if args.iters is not None:
        cfg.bench_iters = args.iters
    if args.warmup is not None:
        cfg.bench_warmup = args.warmup
    cfg.validate()
    if cfg.bench_iters < 100 or cfg.bench_warmup < 10:
        raise DataError(
            f"bench needs >= 100 iterations after >= 10 warmup, got "
            f"{cfg.bench_iters}/{cfg.bench_warmup}"
        )
    net = _load_net(cfg, args.checkpoint)
    image = Tensor(
        np.random.default_rng(cfg.seed).uniform(
            0.0, 1.0, size=(3, cfg.image_size, cfg.image_size)
        )
    )
    stats = bench_fps(
        lambda: net.forward(image), iters=cfg.bench_iters, warmup=cfg.bench_warmup
    )
    head_only, total = net.parameter_counts()
    report = MetricsReport(
        latency=stats,
        extras={
            "params_head_only": head_only,
            "params_total": total,
            "params_reference": REFERENCE_PARAM_BUDGET,
        },
    )
    sys.stdout.write(report.to_text())
    return 0


def cmd_make_synth(args) -> int:
    cfg = _config_for(args)
    cfg.validate()
    manifest = make_synthetic(
        args.n, cfg.seed, args.out, build_regressor(cfg), image_size=cfg.image_size
    )
    print(f"wrote {args.n} samples to {manifest}")
    return 0


def cmd_ingest_freihand(args) -> int:
    cfg = _config_for(args)
    cfg.validate()
    count = ingest_freihand(
        args.xyz,
        args.verts,
        args.k,
        args.images,
        args.out,
        image_size=cfg.image_size,
        limit=args.limit,
    )
    print(f"ingested {count} samples into {args.out}")
    return 0


def cmd_export_obj(args) -> int:
    vertices = np.loadtxt(args.vertices, ndmin=2)
    faces = load_faces(args.faces) if args.faces else None
    export_obj(vertices, args.out, faces)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "make-synth": cmd_make_synth,
    "ingest-freihand": cmd_ingest_freihand,
    "export-obj": cmd_export_obj,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        # every validation error subclasses ValueError; a missing input
        # file named on the command line counts as validation too
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
