#!/usr/bin/env python3
"""Paired navigation benchmark: nearest-frontier baseline vs guided arms.

Generates fresh plans, runs each (plan, start, query) triple through the
baseline and every requested predictor, and prints a comparison table.
"""

import argparse
import random

import numpy as np

from semsight.floorgen import FloorplanSpec, generate_floorplan
from semsight.grids import Pose, SemClass
from semsight.navsim import NavConfig, compare_paired, run_navigation_episode
from semsight.predict import ConstantPredictor, FrequencyPriorPredictor, OraclePredictor


def build_triples(args):
    rng = random.Random(args.seed)
    triples = []
    seed = args.seed * 100_000
    while len(triples) < args.episodes:
        spec = FloorplanSpec(height=args.size, width=args.size, seed=seed,
                             room_count_range=(4, 7))
        seed += 1
        plan = generate_floorplan(spec)
        free = np.argwhere(plan.free)
        start = Pose(*map(int, free[rng.randrange(len(free))]))
        present = sorted({r.class_id for r in plan.rooms} - {SemClass.LIVING_ROOM})
        if not present:
            continue
        triples.append((plan, start, present[rng.randrange(len(present))]))
    return triples


def arm_logs(triples, predictor_for):
    logs = []
    for plan, start, query in triples:
        cfg = NavConfig(query=query)
        logs.append(run_navigation_episode(plan, start, cfg,
                                           predictor=predictor_for(plan)))
    return logs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=100)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    triples = build_triples(args)
    base = arm_logs(triples, lambda plan: None)
    census = np.zeros(10, dtype=np.int64)
    for plan, _, _ in triples:
        census += np.bincount(plan.labels.ravel(), minlength=10)
    freq_predictor = FrequencyPriorPredictor(census / census.sum())

    arms = {
        "uniform": lambda plan: ConstantPredictor(0.5),
        "frequency_prior": lambda plan: freq_predictor,
        "oracle": OraclePredictor,
    }
    header = f"{'arm':>16} {'steps':>7} {'+/-%':>7} {'expl.ratio':>10} {'spl':>6} {'success':>8}"
    print(header)
    print("-" * len(header))
    from semsight.navsim import aggregate

    b = aggregate(base)
    print(f"{'baseline':>16} {b.mean_steps:7.1f} {'':>7} {b.mean_exploration_ratio:10.3f} "
          f"{b.mean_spl:6.3f} {b.success_rate:8.2f}")
    for name, factory in arms.items():
        logs = arm_logs(triples, factory)
        cmp = compare_paired(base, logs)
        g = cmp.guided
        print(f"{name:>16} {g.mean_steps:7.1f} {100 * cmp.mean_step_reduction:6.1f}% "
              f"{g.mean_exploration_ratio:10.3f} {g.mean_spl:6.3f} {g.success_rate:8.2f}")


if __name__ == "__main__":
    main()
