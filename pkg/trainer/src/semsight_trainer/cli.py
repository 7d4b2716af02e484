"""Command-line entry point: train and serve."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from semsight_trainer.model import ModelConfig
from semsight_trainer.server import serve
from semsight_trainer.train import train, train_observed_only


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semsight-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on an SSDS dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--split-manifest", help="restrict training to the train split")
    p.add_argument("--observed-only", action="store_true",
                   help="supervise explored pixels instead (baseline variant)")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--iterations", type=int, default=1500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--lambda-global", type=float, default=1.0)
    p.add_argument("--lambda-area", type=float, default=1.0)
    p.add_argument("--train-frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--hflip", action="store_true")
    p.add_argument("--crop", type=int)
    p.add_argument("--curve", help="write the loss curve to this file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("serve", help="serve a checkpoint over SSP1")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9000)
    p.set_defaults(func=_cmd_serve)
    return parser


def _cmd_train(args) -> int:
    cfg = ModelConfig(
        width=args.width,
        depth=args.depth,
        iterations=args.iterations,
        batch_size=args.batch_size,
        lr=args.lr,
        lambda_global=args.lambda_global,
        lambda_area=args.lambda_area,
        train_frames=args.train_frames,
        seed=args.seed,
        augment_rotate=args.rotate,
        augment_hflip=args.hflip,
        crop=args.crop,
    )
    runner = train_observed_only if args.observed_only else train
    curve = runner(args.dataset, cfg, args.out,
                   split_manifest=args.split_manifest, curve_path=args.curve)
    print(f"trained {args.out}: final loss {curve[-1][1]:.4f} "
          f"after {cfg.iterations} iterations")
    return 0


def _cmd_serve(args) -> int:
    serve(args.checkpoint, args.host, args.port)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
