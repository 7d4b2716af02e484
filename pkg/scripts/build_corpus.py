#!/usr/bin/env python3
"""Generate a plan corpus and its exploration dataset in one shot.

Equivalent to ``semsight gen`` followed by ``semsight dataset``; handy as
a single reproducible entry point for training-data builds.
"""

import argparse

from semsight.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--plans", type=int, default=200)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--frames", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    plans_dir = f"{args.out}/plans"
    code = cli_main([
        "gen", "--out", plans_dir, "--count", str(args.plans),
        "--height", str(args.size), "--width", str(args.size),
        "--seed", str(args.seed),
    ])
    if code:
        raise SystemExit(code)
    code = cli_main([
        "dataset", "--plans", plans_dir, "--out", f"{args.out}/data.ssds",
        "--frames", str(args.frames), "--seed", str(args.seed),
    ])
    raise SystemExit(code)


if __name__ == "__main__":
    main()
