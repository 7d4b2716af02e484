"""Command-line entry point: gen, explore, dataset, eval, nav, render.

Every run writes a manifest of its full effective configuration and the
tool version next to its outputs; reruns with the same configuration
produce byte-identical files. ``SEMSIGHT_SEED`` overrides configured
seeds for CI determinism, and ``--config FILE`` (key=value lines)
supplies defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

import semsight
from semsight import dataset as ds
from semsight import floorgen, metrics, navsim, predict
from semsight.explorer import run_exploration
from semsight.grids import (
    NUM_CLASSES,
    Pose,
    RasterError,
    SemClass,
    read_raster,
    write_raster,
)

#: Fixed render palette, one RGB triple per class id (see docs/FORMATS.md).
PALETTE = np.array(
    [
        (66, 135, 245),   # bedroom
        (255, 179, 71),   # living_room
        (86, 188, 96),    # kitchen
        (94, 205, 228),   # bathroom
        (247, 140, 162),  # balcony
        (158, 123, 73),   # storage
        (255, 241, 118),  # doorway
        (60, 60, 60),     # wall
        (214, 48, 49),    # entrance_door
        (235, 235, 235),  # outside
    ],
    dtype=np.uint8,
)

_PROB_MAGIC = "SSPROBv1"


class CliError(ValueError):
    """User-facing configuration problem."""


# ---------------------------------------------------------------------------
# small IO helpers

def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an uncompressed binary PPM (P6) image."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes(order="C"))


def heat_ramp(prob: np.ndarray) -> np.ndarray:
    """Monotone grayscale ramp: 0.0 -> black, 1.0 -> white."""
    v = np.round(np.clip(prob, 0.0, 1.0) * 255).astype(np.uint8)
    return np.stack([v, v, v], axis=2)


def write_probmap(path, prob: np.ndarray) -> None:
    prob = np.asarray(prob, dtype=np.float64)
    h, w = prob.shape
    lines = [f"{_PROB_MAGIC} {h} {w}"]
    for row in prob:
        lines.append(" ".join(f"{v:.6f}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_probmap(path) -> np.ndarray:
    text = Path(path).read_text(encoding="ascii").splitlines()
    head = text[0].split()
    if len(head) != 3 or head[0] != _PROB_MAGIC:
        raise CliError(f"not a {_PROB_MAGIC} file: {path}")
    h, w = int(head[1]), int(head[2])
    rows = [[float(v) for v in line.split()] for line in text[1:1 + h]]
    arr = np.array(rows, dtype=np.float64)
    if arr.shape != (h, w):
        raise CliError(f"probability map payload does not match {h}x{w}")
    return arr


def write_manifest(path, command: str, args: argparse.Namespace) -> None:
    skip = {"func"}
    pairs = {
        "command": command,
        "version": semsight.__version__,
    }
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        pairs[key] = value
    lines = [f"{k}={pairs[k]}" for k in sorted(pairs)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _effective_seed(args) -> int:
    env = os.environ.get("SEMSIGHT_SEED")
    if env is not None:
        return int(env)
    return args.seed


def _class_by_name(name: str) -> SemClass:
    try:
        return SemClass[name.upper()]
    except KeyError:
        raise CliError(f"unknown class name {name!r}") from None


def _load_plans(plans_dir) -> list[tuple[int, floorgen.Floorplan]]:
    paths = sorted(Path(plans_dir).glob("*.sgm"))
    if not paths:
        raise CliError(f"no .sgm rasters found in {plans_dir}")
    plans = []
    for i, path in enumerate(paths):
        plans.append((i, floorgen.floorplan_from_labels(read_raster(path))))
    return plans


def _make_predictor_for(kind_name: str, endpoint, plan, frequencies):
    kind = predict.PredictorKind(kind_name, endpoint)
    return predict.make_predictor(kind, plan=plan, frequencies=frequencies)


def _parse_predictor(spec_str: str) -> tuple[str, Optional[str]]:
    if spec_str.startswith("external:"):
        return "external", spec_str.split(":", 1)[1]
    if spec_str in ("oracle", "uniform", "frequency_prior"):
        return spec_str, None
    raise CliError(
        f"unknown predictor {spec_str!r}; expected oracle, uniform, "
        "frequency_prior, or external:HOST:PORT"
    )


def _random_free_start(plan: floorgen.Floorplan, rng: random.Random) -> Pose:
    free = np.argwhere(plan.free)
    r, c = free[rng.randrange(len(free))]
    return Pose(int(r), int(c))


# ---------------------------------------------------------------------------
# gen

def _gen_one(task):
    index, spec, out_dir = task
    plan = floorgen.generate_floorplan(spec)
    stem = Path(out_dir) / f"plan_{index:04d}"
    write_raster(plan.labels, stem.with_suffix(".sgm"))
    floorgen.write_sidecar(plan, stem.with_suffix(".meta"))
    return index


def cmd_gen(args) -> int:
    seed = _effective_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i in range(args.count):
        spec = floorgen.FloorplanSpec(
            height=args.height,
            width=args.width,
            seed=seed + i,
            room_count_range=tuple(args.rooms),
            min_room_side=args.min_room_side,
        )
        tasks.append((i, spec, str(out_dir)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_gen_one, tasks))
    else:
        for task in tasks:
            _gen_one(task)
    write_manifest(out_dir / "manifest.txt", "gen", args)
    print(f"generated {args.count} plans in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# explore

def cmd_explore(args) -> int:
    labels = read_raster(args.plan)
    plan = floorgen.floorplan_from_labels(labels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.start is not None:
        start = Pose(args.start[0], args.start[1])
    else:
        start = _random_free_start(plan, random.Random(_effective_seed(args)))
    frames = run_exploration(
        plan, start, max_steps=args.max_steps, radius=args.radius,
        keep_first=args.keep_first,
    )
    manifest_lines = []
    for frame in frames:
        stem = f"frame_{frame.step:04d}"
        layers = {
            "explored": frame.explored,
            "trajectory": frame.trajectory,
            "obstacles": frame.obstacles_seen,
        }
        paths = {}
        for name, mask in layers.items():
            path = out_dir / f"{stem}_{name}.sgm"
            write_raster(mask.astype(np.uint8), path)
            paths[name] = path.name
        sem_path = out_dir / f"{stem}_semantics.sgm"
        observed = np.where(frame.explored, plan.labels, SemClass.OUTSIDE)
        write_raster(observed.astype(np.uint8), sem_path)
        paths["semantics"] = sem_path.name
        layer_list = " ".join(f"{k}={v}" for k, v in sorted(paths.items()))
        manifest_lines.append(
            f"step={frame.step} pose={frame.pose.row},{frame.pose.col} {layer_list}"
        )
    (out_dir / "frames.txt").write_text("\n".join(manifest_lines) + "\n", "ascii")
    write_manifest(out_dir / "manifest.txt", "explore", args)
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# dataset

def cmd_dataset(args) -> int:
    seed = _effective_seed(args)
    plans = _load_plans(args.plans)
    records = []
    for plan_id, plan in plans:
        rng = random.Random(seed * 1_000_003 + plan_id)
        start = _random_free_start(plan, rng)
        frames = run_exploration(
            plan, start, max_steps=args.max_steps, radius=args.radius,
            keep_first=args.frames,
        )
        for frame in frames:
            for query in range(7):
                records.append((plan_id, ds.build_sample(frame, plan, query)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_dataset(records, out)
    split = ds.make_split([plan_id for plan_id, _ in plans], seed=seed)
    ds.write_split_manifest(split, out.with_suffix(".splits"))
    write_manifest(out.with_suffix(".manifest"), "dataset", args)
    print(f"wrote {len(records)} records from {len(plans)} plans to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    records = ds.read_dataset(args.dataset)
    kind_name, endpoint = _parse_predictor(args.predictor)

    if args.split:
        manifest_path = args.split_manifest or str(
            Path(args.dataset).with_suffix(".splits")
        )
        split = ds.read_split_manifest(manifest_path)
        keep = set(split[args.split])
        eval_records = [(pid, s) for pid, s in records if pid in keep]
        train_ids = set(split["train"])
    else:
        eval_records = records
        train_ids = {pid for pid, _ in records}
    if not eval_records:
        raise CliError("no records selected for evaluation")

    frequencies = None
    if kind_name == "frequency_prior":
        census = np.zeros(NUM_CLASSES, dtype=np.int64)
        seen = set()
        for pid, sample in records:
            if pid in train_ids and (pid, sample.frame.step) not in seen:
                seen.add((pid, sample.frame.step))
                labels = ds.sample_gt_labels(sample)
                census += np.bincount(labels.ravel(), minlength=NUM_CLASSES)
        frequencies = census / census.sum()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    reports = []
    shared = None
    if kind_name in ("uniform", "frequency_prior", "external"):
        shared = _make_predictor_for(kind_name, endpoint, None, frequencies)
    oracle_cache: dict[int, predict.Predictor] = {}
    for pid, sample in eval_records:
        gt_labels = ds.sample_gt_labels(sample)
        if shared is not None:
            backend = shared
        else:
            if pid not in oracle_cache:
                oracle_cache[pid] = predict.OraclePredictor(gt_labels)
            backend = oracle_cache[pid]
        result = backend.predict(sample.frame, sample.query)
        try:
            report = metrics.evaluate_frame(
                result, gt_labels, sample.frame.explored, relax=args.relax
            )
        except metrics.EmptyRegionError:
            continue
        reports.append(report)
        rows.append(
            f"{pid}\t{sample.frame.step}\t{int(sample.query)}\t{report.row()}"
        )
        if args.dump_heatmaps:
            name = f"heat_p{pid:04d}_s{sample.frame.step:03d}_q{int(sample.query)}.ssprob"
            write_probmap(out_dir / name, result.area_prob)
    if hasattr(shared, "close"):
        shared.close()
    if not reports:
        raise CliError("every selected record had an empty evaluation region")

    mean = {
        "records": len(reports),
        "pa": np.mean([r.pa for r in reports]),
        "fwiou": np.mean([r.fwiou for r in reports]),
        "sc": np.mean([r.sc for r in reports]),
    }
    report_lines = [f"records={mean['records']}"] + [
        f"{k}={mean[k]:.6f}" for k in ("pa", "fwiou", "sc")
    ]
    for cls in SemClass:
        vals = np.array([r.per_class[cls] for r in reports])
        name = cls.name.lower()
        for j, part in enumerate(("recall", "precision", "f1")):
            report_lines.append(f"{name}.{part}={vals[:, j].mean():.6f}")
    (out_dir / "report.txt").write_text("\n".join(report_lines) + "\n", "ascii")
    header = "plan_id\tstep\tquery\tpa\tfwiou\tsc\tevaluated_cells"
    (out_dir / "rows.txt").write_text("\n".join([header] + rows) + "\n", "ascii")
    write_manifest(out_dir / "manifest.txt", "eval", args)
    print(f"evaluated {len(reports)} records; mean pa={mean['pa']:.4f} "
          f"fwiou={mean['fwiou']:.4f} sc={mean['sc']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# nav

def _nav_tasks(plans, episodes: int, query_arg: Optional[str], seed: int):
    """Deterministic (plan_id, start, query) triples for a benchmark run."""
    rng = random.Random(seed)
    tasks = []
    for episode in range(episodes):
        plan_id, plan = plans[episode % len(plans)]
        start = _random_free_start(plan, rng)
        if query_arg:
            query = _class_by_name(query_arg)
        else:
            present = sorted(
                {room.class_id for room in plan.rooms}
                - {SemClass.LIVING_ROOM}
            ) or [SemClass.LIVING_ROOM]
            query = present[rng.randrange(len(present))]
        tasks.append((plan_id, plan, start, query))
    return tasks


def _nav_worker(payload):
    plan_id, plan, start, query, cfg_kwargs, kind_name, endpoint, frequencies = payload
    cfg = navsim.NavConfig(query=query, **cfg_kwargs)
    backend = None
    if kind_name == "oracle":
        backend = predict.OraclePredictor(plan)
    elif kind_name is not None:
        backend = _make_predictor_for(kind_name, endpoint, None, frequencies)
    try:
        return navsim.run_navigation_episode(
            plan, start, cfg, predictor=backend, plan_id=plan_id
        )
    finally:
        if hasattr(backend, "close"):
            backend.close()


def _run_nav_arm(tasks, cfg_kwargs, kind_name: Optional[str], endpoint,
                 frequencies, jobs: int = 1):
    payloads = [
        (plan_id, plan, start, query, cfg_kwargs, kind_name, endpoint, frequencies)
        for plan_id, plan, start, query in tasks
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_nav_worker, payloads))
    return [_nav_worker(p) for p in payloads]


def _summary_lines(tag: str, summary: navsim.NavSummary) -> list[str]:
    return [
        f"{tag}.episodes={summary.episodes}",
        f"{tag}.mean_steps={summary.mean_steps:.6f}",
        f"{tag}.mean_exploration_ratio={summary.mean_exploration_ratio:.6f}",
        f"{tag}.mean_spl={summary.mean_spl:.6f}",
        f"{tag}.success_rate={summary.success_rate:.6f}",
    ]


def cmd_nav(args) -> int:
    seed = _effective_seed(args)
    plans = _load_plans(args.plans)
    tasks = _nav_tasks(plans, args.episodes, args.query, seed)
    cfg_kwargs = dict(
        repredict_every=args.repredict_every,
        window=args.window,
        alpha=args.alpha,
        max_steps=args.max_steps,
        radius=args.radius,
    )
    kind_name, endpoint = (None, None)
    if args.predictor:
        kind_name, endpoint = _parse_predictor(args.predictor)

    frequencies = None
    if kind_name == "frequency_prior":
        census = np.zeros(NUM_CLASSES, dtype=np.int64)
        for _, plan in plans:
            census += np.bincount(plan.labels.ravel(), minlength=NUM_CLASSES)
        frequencies = census / census.sum()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_lines = []
    if args.paired:
        if kind_name is None:
            raise CliError("--paired needs --predictor for the guided arm")
        base_logs = _run_nav_arm(tasks, cfg_kwargs, None, None, None, args.jobs)
        guided_logs = _run_nav_arm(
            tasks, cfg_kwargs, kind_name, endpoint, frequencies, args.jobs
        )
        comparison = navsim.compare_paired(base_logs, guided_logs)
        _write_episode_file(out_dir / "episodes_baseline.txt", base_logs)
        _write_episode_file(out_dir / "episodes_guided.txt", guided_logs)
        summary_lines += _summary_lines("baseline", comparison.baseline)
        summary_lines += _summary_lines("guided", comparison.guided)
        summary_lines.append(
            f"paired.mean_step_reduction={comparison.mean_step_reduction:.6f}"
        )
        deltas = ",".join(str(d) for d in comparison.step_deltas)
        summary_lines.append(f"paired.step_deltas={deltas}")
        print(
            f"baseline steps={comparison.baseline.mean_steps:.1f} vs guided "
            f"steps={comparison.guided.mean_steps:.1f} "
            f"(reduction {100 * comparison.mean_step_reduction:.1f}%)"
        )
    else:
        logs = _run_nav_arm(tasks, cfg_kwargs, kind_name, endpoint, frequencies,
                            args.jobs)
        _write_episode_file(out_dir / "episodes.txt", logs)
        summary = navsim.aggregate(logs)
        summary_lines += _summary_lines("run", summary)
        print(
            f"{summary.episodes} episodes: mean steps={summary.mean_steps:.1f} "
            f"spl={summary.mean_spl:.3f} success={summary.success_rate:.2f}"
        )
    (out_dir / "summary.txt").write_text("\n".join(summary_lines) + "\n", "ascii")
    write_manifest(out_dir / "manifest.txt", "nav", args)
    return 0


def _write_episode_file(path, logs) -> None:
    header = "\t".join(navsim.EPISODE_FIELDS)
    lines = [header] + [navsim.episode_line(log) for log in logs]
    Path(path).write_text("\n".join(lines) + "\n", "ascii")


# ---------------------------------------------------------------------------
# render

def cmd_render(args) -> int:
    if args.layer == "semantic":
        labels = read_raster(args.input)
        write_ppm(args.out, PALETTE[labels])
    elif args.layer in ("mask", "explored", "trajectory", "obstacles"):
        mask = read_raster(args.input)
        write_ppm(args.out, heat_ramp((mask > 0).astype(np.float64)))
    elif args.layer == "heatmap":
        write_ppm(args.out, heat_ramp(read_probmap(args.input)))
    else:
        raise CliError(f"unknown layer name {args.layer!r}")
    print(f"rendered {args.layer} layer to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semsight",
        description="BEV exploration simulation and evaluation suite",
    )
    parser.add_argument("--config", help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate floorplan rasters")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-room-side", type=int, default=3)
    p.add_argument("--rooms", type=int, nargs=2, default=(3, 6),
                   metavar=("MIN", "MAX"))
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("explore", help="run frontier exploration on one plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, nargs=2, metavar=("ROW", "COL"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--keep-first", type=int, default=20)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("dataset", help="build an SSDS dataset from plans")
    p.add_argument("--plans", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="evaluate a predictor on an SSDS dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictor", required=True,
                   help="oracle | uniform | frequency_prior | external:HOST:PORT")
    p.add_argument("--out", required=True)
    p.add_argument("--relax", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--split-manifest")
    p.add_argument("--dump-heatmaps", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nav", help="run the navigation benchmark")
    p.add_argument("--plans", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--predictor",
                   help="oracle | uniform | frequency_prior | external:HOST:PORT")
    p.add_argument("--paired", action="store_true",
                   help="also run the unguided baseline on the same triples")
    p.add_argument("--query", help="fixed query class name (default: per-episode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repredict-every", type=int, default=5)
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--radius", type=int, default=8)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_nav)

    p = sub.add_parser("render", help="export a layer as a PPM image")
    p.add_argument("--input", required=True)
    p.add_argument("--layer", required=True,
                   help="semantic | mask | explored | trajectory | obstacles | heatmap")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Splice --config file entries in as flags ahead of explicit ones."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise CliError("--config needs a file argument")
    path = argv[at + 1]
    rest = argv[:at] + argv[at + 2:]
    if not rest:
        raise CliError("--config requires a subcommand")
    flags: list[str] = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "false"):
            if flag in ("--relax",):
                flags.append(flag if value.lower() == "true" else "--no-relax")
            elif value.lower() == "true":
                flags.append(flag)
        else:
            flags.extend([flag] + value.split())
    return [rest[0]] + flags + rest[1:]


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, floorgen.SpecError, ds.DatasetError, RasterError,
            predict.ProtocolError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (floorgen.GenerationError, predict.TransportError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
