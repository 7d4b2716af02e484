"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime. Run with ``pytest tests/test_acceptance.py -s``.
"""

import hashlib
import io
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from semsight.dataset import (
    ChecksumError,
    LossConfig,
    build_sample,
    masked_weighted_bce,
    masked_weighted_bce_grad,
    multitask_loss,
    read_dataset,
    write_dataset,
)
from semsight.explorer import initial_state, run_exploration, step_explore
from semsight.floorgen import (
    FloorplanSpec,
    floorplan_from_labels,
    generate_floorplan,
    reachable_free_cells,
)
from semsight.grids import (
    BadMagicError,
    LabelRangeError,
    NUM_CLASSES,
    Pose,
    SemClass,
    read_raster,
    write_raster,
)
from semsight.metrics import EmptyRegionError, evaluate_frame
from semsight.navsim import NavConfig, compare_paired, run_navigation_episode
from semsight.predict import (
    ConstantPredictor,
    OraclePredictor,
    ProtocolMagicError,
    decode_request,
    decode_response,
    encode_response,
)

FIXTURES = Path(__file__).parent / "fixtures"


class _Timer:
    def __init__(self, name: str, budget_s: float):
        self.name = name
        self.budget_s = budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, *rest):
        elapsed = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None and elapsed < self.budget_s else "FAIL"
        print(f"[{status}] {self.name}: {elapsed:.2f}s (budget {self.budget_s:.0f}s)")
        assert elapsed < self.budget_s, f"{self.name} exceeded {self.budget_s}s"


def _plan_set(count, size, seed0, **spec_kw):
    return [
        generate_floorplan(FloorplanSpec(height=size, width=size, seed=seed0 + i,
                                         **spec_kw))
        for i in range(count)
    ]


def test_criterion_loss_math():
    with _Timer("loss math (hand cases + gradient check)", budget_s=1.0):
        loss = masked_weighted_bce(
            np.zeros((1, 1, 1)), np.ones((1, 1, 1)), [1.0],
            np.ones((1, 1), dtype=bool),
        )
        assert abs(loss - math.log(2)) < 1e-9
        saturated = masked_weighted_bce(
            np.full((1, 1, 1), 30.0), np.ones((1, 1, 1)), [1.0],
            np.ones((1, 1), dtype=bool),
        )
        assert abs(saturated) < 1e-9

        rng = np.random.default_rng(123)
        eps = 1e-6
        for _ in range(100):
            shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                     int(rng.integers(1, 4)))
            logits = rng.normal(scale=2.5, size=shape)
            targets = rng.integers(0, 2, size=shape).astype(float)
            weights = rng.uniform(0.5, 5.0, size=shape[2])
            valid = rng.random(shape[:2]) < 0.8
            valid.flat[int(rng.integers(0, valid.size))] = True
            grad = masked_weighted_bce_grad(logits, targets, weights, valid)
            k = int(rng.integers(0, logits.size))
            bumped = logits.ravel().copy()
            bumped[k] += eps
            plus = masked_weighted_bce(bumped.reshape(shape), targets, weights, valid)
            bumped[k] -= 2 * eps
            minus = masked_weighted_bce(bumped.reshape(shape), targets, weights, valid)
            numeric = (plus - minus) / (2 * eps)
            analytic = grad.ravel()[k]
            if abs(numeric) > 1e-10 or abs(analytic) > 1e-10:
                assert abs(analytic - numeric) <= 1e-6 * max(abs(numeric), abs(analytic))


def test_criterion_mask_constraint_property():
    with _Timer("mask-constraint supervision property", budget_s=10.0):
        plans = _plan_set(12, 20, seed0=300, room_count_range=(2, 4))
        rng = np.random.default_rng(9)
        checked = 0
        for plan in plans:
            frames = run_exploration(plan, Pose(*plan.rooms[0].cells[0]),
                                     radius=6, keep_first=10)
            for frame in frames:
                if checked >= 100:
                    break
                if frame.explored.all() or not frame.explored.any():
                    continue
                query = int(rng.integers(0, 7))
                sample = build_sample(frame, plan, query)
                cfg = LossConfig()
                h, w = frame.shape
                g = rng.normal(size=(h, w, NUM_CLASSES))
                a = rng.normal(size=(h, w))
                base = multitask_loss(g, a, sample, cfg)

                # prediction perturbations on explored cells: exactly zero effect
                g2, a2 = g.copy(), a.copy()
                g2[frame.explored] += rng.normal(size=(int(frame.explored.sum()),
                                                       NUM_CLASSES))
                a2[frame.explored] -= 2.5
                assert multitask_loss(g2, a2, sample, cfg).total == base.total

                # ground-truth perturbations on explored cells: exactly zero effect
                er, ec = map(int, np.argwhere(frame.explored)[0])
                labels2 = plan.labels.copy()
                labels2[er, ec] = (labels2[er, ec] + 1) % NUM_CLASSES
                sample2 = build_sample(frame, floorplan_from_labels(labels2), query)
                assert multitask_loss(g, a, sample2, cfg).total == base.total

                # any unexplored-cell perturbation moves the loss
                ur, uc = map(int, np.argwhere(~frame.explored)[0])
                g3 = g.copy()
                g3[ur, uc, query] += 1.0
                assert multitask_loss(g3, a, sample, cfg).total != base.total
                a3 = a.copy()
                a3[ur, uc] += 1.0
                assert multitask_loss(g, a3, sample, cfg).total != base.total
                checked += 1
        assert checked == 100


def test_criterion_oracle_perfection():
    with _Timer("oracle perfection on every metric", budget_s=60.0):
        plans = _plan_set(25, 24, seed0=1000)
        assert len(plans) >= 20
        evaluated = 0
        for plan in plans:
            oracle = OraclePredictor(plan)
            frames = run_exploration(plan, Pose(*plan.rooms[0].cells[0]),
                                     radius=8, keep_first=10)
            for frame in frames:
                result = oracle.predict(frame, SemClass.BEDROOM)
                try:
                    report = evaluate_frame(result, plan.labels, frame.explored)
                except EmptyRegionError:
                    continue
                assert report.pa == 1.0
                assert report.fwiou == 1.0
                assert report.sc == 1.0
                for cls in SemClass:
                    assert report.per_class[cls] == (1.0, 1.0, 1.0)
                evaluated += 1
        assert evaluated >= 200


def test_criterion_exploration_soundness():
    with _Timer("exploration soundness on 100 plans", budget_s=120.0):
        for seed in range(100):
            plan = generate_floorplan(FloorplanSpec(height=24, width=24, seed=seed))
            start = Pose(*plan.rooms[0].cells[0])
            state = initial_state(plan, start, 8)
            prev_explored = int(state.explored.sum())
            while not state.complete and state.step < 200:
                state = step_explore(state, 8)
                now = int(state.explored.sum())
                assert now >= prev_explored, "explored mask shrank"
                prev_explored = now
            reach = reachable_free_cells(plan, start)
            covered = int((state.explored & reach).sum())
            assert covered == int(reach.sum()), (
                f"seed {seed}: covered {covered}/{int(reach.sum())} reachable free cells"
            )


def test_criterion_navigation_benefit():
    with _Timer("navigation benefit of oracle guidance", budget_s=300.0):
        rng = random.Random(20240601)
        base_logs, guided_logs = [], []
        made, seed = 0, 500_000
        while made < 100:
            spec = FloorplanSpec(height=32, width=32, seed=seed,
                                 room_count_range=(4, 7))
            seed += 1
            plan = generate_floorplan(spec)
            free = np.argwhere(plan.free)
            start = Pose(*map(int, free[rng.randrange(len(free))]))
            present = sorted({room.class_id for room in plan.rooms}
                             - {SemClass.LIVING_ROOM})
            if not present:
                continue
            query = present[rng.randrange(len(present))]
            cfg = NavConfig(query=query)
            base_logs.append(run_navigation_episode(plan, start, cfg, predictor=None))
            guided_logs.append(
                run_navigation_episode(plan, start, cfg,
                                       predictor=OraclePredictor(plan))
            )
            made += 1
        cmp = compare_paired(base_logs, guided_logs)
        print(
            f"    steps {cmp.baseline.mean_steps:.1f} -> {cmp.guided.mean_steps:.1f} "
            f"({100 * cmp.mean_step_reduction:.1f}% reduction), "
            f"ER {cmp.baseline.mean_exploration_ratio:.3f} -> "
            f"{cmp.guided.mean_exploration_ratio:.3f}, "
            f"SPL {cmp.baseline.mean_spl:.3f} -> {cmp.guided.mean_spl:.3f}"
        )
        assert cmp.mean_step_reduction >= 0.20
        assert cmp.guided.mean_exploration_ratio < cmp.baseline.mean_exploration_ratio
        assert cmp.guided.mean_spl > cmp.baseline.mean_spl


def test_criterion_baseline_equivalence():
    with _Timer("baseline equals zero-probability guidance", budget_s=120.0):
        plans = _plan_set(10, 24, seed0=7000)
        rng = random.Random(42)
        pairs = 0
        while pairs < 50:
            plan = plans[pairs % len(plans)]
            free = np.argwhere(plan.free)
            start = Pose(*map(int, free[rng.randrange(len(free))]))
            query = SemClass(rng.randrange(7))
            cfg = NavConfig(query=query)
            none_log = run_navigation_episode(plan, start, cfg, predictor=None)
            zero_log = run_navigation_episode(plan, start, cfg,
                                              predictor=ConstantPredictor(0.0))
            assert none_log == zero_log
            pairs += 1


def test_criterion_format_stability():
    with _Timer("format stability (SEMGRIDv1, SSDS, SSP1)", budget_s=30.0):
        sgm = (FIXTURES / "tiny.sgm").read_bytes()
        labels = read_raster(sgm)
        buf = io.BytesIO()
        write_raster(labels, buf)
        assert buf.getvalue() == sgm
        with pytest.raises(BadMagicError):
            read_raster(b"X" + sgm[1:])
        with pytest.raises(LabelRangeError):
            read_raster(sgm[:-1] + bytes([250]))

        ssds = (FIXTURES / "sample.ssds").read_bytes()
        records = read_dataset(io.BytesIO(ssds))
        buf = io.BytesIO()
        write_dataset(records, buf)
        assert buf.getvalue() == ssds
        corrupted = bytearray(ssds)
        corrupted[300] ^= 0xFF
        with pytest.raises(ChecksumError):
            read_dataset(io.BytesIO(bytes(corrupted)))

        request = (FIXTURES / "request.ssp1").read_bytes()
        layers, query = decode_request(request)
        assert layers.shape[0] == 14 and int(query) == 3
        response = (FIXTURES / "response.ssp1").read_bytes()
        result = decode_response(response, query=1)
        assert encode_response(result.global_probs) == response
        with pytest.raises(ProtocolMagicError):
            decode_response(b"ZZZZ" + response[4:], query=1)
