"""Closed-loop navigation to a target room class, with or without guidance.

Both arms share one motion model: sense, pick a frontier, walk one cell
along the BFS path through explored free cells. The guided arm ranks
frontiers by predicted target-probability mass near them discounted by
travel distance,

    U(f) = sum of area_prob over unexplored cells in the window around f
           / (1 + alpha * dist(f)),

with ties broken by distance then (row, col). Zero mass therefore
degenerates to the nearest-frontier baseline, so the two arms differ
only in the utility numerator. Episodes score Steps, Exploration Ratio
(explored fraction of reachable free space at termination), and SPL.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from semsight.explorer import (
    ExplorationState,
    SimulationInvariantError,
    initial_state,
    step_explore,
)
from semsight.floorgen import Floorplan, reachable_free_cells
from semsight.grids import NEIGHBORS_4, Pose, QUERY_CLASSES, SemClass, as_mask
from semsight.predict import Predictor


@dataclass(frozen=True)
class NavConfig:
    """Episode parameters; window is the odd side length of the utility box."""

    query: SemClass
    repredict_every: int = 5
    window: int = 7
    alpha: float = 0.1
    max_steps: int = 200
    radius: int = 8

    def __post_init__(self):
        object.__setattr__(self, "query", SemClass(self.query))
        if self.query not in QUERY_CLASSES:
            raise ValueError(f"query must be a room class in [0, 6], got {self.query}")
        if self.window % 2 != 1 or self.window < 1:
            raise ValueError("window must be odd and >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.repredict_every < 1:
            raise ValueError("repredict_every must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class EpisodeLog:
    """Full record of one navigation episode."""

    query: SemClass
    start: Pose
    success: bool
    steps: int
    exploration_ratio: float
    spl: float
    poses: list[Pose]
    frontier_choices: list[tuple[int, Pose, float]]
    target_absent: bool = False
    plan_id: int = -1


def shortest_path_len(
    plan: Floorplan, start: Pose, targets: Iterable[tuple[int, int]]
) -> Optional[int]:
    """BFS length through ground-truth free space to the nearest target cell.

    Used only for the SPL denominator, never for agent planning. Returns
    None when no target is reachable.
    """
    start = Pose(*start)
    if not plan.free[start.row, start.col]:
        raise ValueError(f"start {start} is not on a free cell")
    target_set = {(int(r), int(c)) for r, c in targets}
    if not target_set:
        return None
    if (start.row, start.col) in target_set:
        return 0
    h, w = plan.labels.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    dist[start.row, start.col] = 0
    queue = deque([(start.row, start.col)])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and plan.free[nr, nc] and dist[nr, nc] < 0:
                if (nr, nc) in target_set:
                    return int(d)
                dist[nr, nc] = d
                queue.append((nr, nc))
    return None


def score_frontiers(
    frontiers: Sequence[Pose],
    area_prob: np.ndarray,
    explored: np.ndarray,
    dists: np.ndarray,
    cfg: NavConfig,
) -> np.ndarray:
    """Utility of each frontier: windowed unexplored probability mass over
    distance-discounted cost."""
    if len(frontiers) == 0:
        raise ValueError("no frontiers to score")
    prob = np.asarray(area_prob, dtype=np.float64)
    explored = as_mask(explored, like=prob)
    masked = np.where(explored, 0.0, prob)
    half = cfg.window // 2
    padded = np.pad(masked, half + 1)
    integral = padded.cumsum(axis=0).cumsum(axis=1)
    utilities = np.empty(len(frontiers))
    for i, f in enumerate(frontiers):
        # box [f.row-half, f.row+half] x [f.col-half, f.col+half] in padded coords
        r0, c0 = f.row, f.col
        r1, c1 = f.row + cfg.window, f.col + cfg.window
        mass = (
            integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]
        )
        utilities[i] = mass / (1.0 + cfg.alpha * float(dists[i]))
    return utilities


@dataclass
class NavSummary:
    """Aggregate over a list of episodes; SPL averages failures as zero."""

    episodes: int
    mean_steps: float
    mean_exploration_ratio: float
    mean_spl: float
    success_rate: float


def aggregate(logs: Sequence[EpisodeLog]) -> NavSummary:
    if not logs:
        raise ValueError("cannot aggregate zero episodes")
    return NavSummary(
        episodes=len(logs),
        mean_steps=float(np.mean([log.steps for log in logs])),
        mean_exploration_ratio=float(np.mean([log.exploration_ratio for log in logs])),
        mean_spl=float(np.mean([log.spl for log in logs])),
        success_rate=float(np.mean([log.success for log in logs])),
    )


def run_navigation_episode(
    plan: Floorplan,
    start: Pose,
    cfg: NavConfig,
    predictor: Optional[Predictor] = None,
    plan_id: int = -1,
) -> EpisodeLog:
    """Run one episode; with ``predictor=None`` this is exactly the
    nearest-frontier baseline."""
    start = Pose(*start)
    target_cells = np.argwhere(plan.labels == cfg.query)
    target_absent = target_cells.size == 0
    optimal = (
        None if target_absent else shortest_path_len(plan, start, map(tuple, target_cells))
    )

    state = initial_state(plan, start, cfg.radius)
    poses = [start]
    choices: list[tuple[int, Pose, float]] = []
    area_prob: Optional[np.ndarray] = None
    success = False

    while True:
        if plan.labels[state.pose.row, state.pose.col] == cfg.query:
            success = True
            break
        if state.step >= cfg.max_steps:
            break
        if predictor is not None and (
            area_prob is None or state.step % cfg.repredict_every == 0
        ):
            area_prob = predictor.predict(state.frame(), cfg.query).area_prob

        if area_prob is None:
            utility_fn = None
        else:
            snapshot = area_prob

            def utility_fn(frontiers, dists, _explored=state.explored, _prob=snapshot):
                return score_frontiers(frontiers, _prob, _explored, dists, cfg)

        state = step_explore(state, cfg.radius, utility_fn=utility_fn)
        if state.complete:
            break
        poses.append(state.pose)
        choices.append((state.step, state.last_frontier, state.last_utility))

    steps = state.step
    reachable = reachable_free_cells(plan, (start.row, start.col))
    n_reachable = int(reachable.sum())
    explored_free = int((state.explored & reachable).sum())
    exploration_ratio = explored_free / n_reachable if n_reachable else 0.0

    if success and optimal is not None:
        spl = 1.0 if steps == 0 and optimal == 0 else optimal / max(steps, optimal)
    else:
        spl = 0.0
    return EpisodeLog(
        query=cfg.query,
        start=start,
        success=success,
        steps=steps,
        exploration_ratio=float(exploration_ratio),
        spl=float(spl),
        poses=poses,
        frontier_choices=choices,
        target_absent=target_absent,
        plan_id=plan_id,
    )


# ---------------------------------------------------------------------------
# line-delimited episode records

EPISODE_FIELDS = (
    "plan_id",
    "query",
    "start_row",
    "start_col",
    "success",
    "steps",
    "exploration_ratio",
    "spl",
    "target_absent",
)


def episode_line(log: EpisodeLog) -> str:
    """One fixed-field-order line per episode."""
    return "\t".join(
        str(v)
        for v in (
            log.plan_id,
            int(log.query),
            log.start.row,
            log.start.col,
            int(log.success),
            log.steps,
            f"{log.exploration_ratio:.6f}",
            f"{log.spl:.6f}",
            int(log.target_absent),
        )
    )


def parse_episode_line(line: str) -> EpisodeLog:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != len(EPISODE_FIELDS):
        raise ValueError(f"expected {len(EPISODE_FIELDS)} fields, got {len(parts)}")
    return EpisodeLog(
        plan_id=int(parts[0]),
        query=SemClass(int(parts[1])),
        start=Pose(int(parts[2]), int(parts[3])),
        success=bool(int(parts[4])),
        steps=int(parts[5]),
        exploration_ratio=float(parts[6]),
        spl=float(parts[7]),
        poses=[],
        frontier_choices=[],
        target_absent=bool(int(parts[8])),
    )


@dataclass
class PairedComparison:
    """Baseline vs guided runs on identical (plan, start, query) triples."""

    baseline: NavSummary
    guided: NavSummary
    step_deltas: list[int]
    mean_step_reduction: float  # relative to the baseline mean


def compare_paired(
    baseline_logs: Sequence[EpisodeLog], guided_logs: Sequence[EpisodeLog]
) -> PairedComparison:
    if len(baseline_logs) != len(guided_logs):
        raise ValueError("paired comparison needs equal-length log lists")
    base = aggregate(baseline_logs)
    guided = aggregate(guided_logs)
    deltas = [b.steps - g.steps for b, g in zip(baseline_logs, guided_logs)]
    reduction = (
        (base.mean_steps - guided.mean_steps) / base.mean_steps
        if base.mean_steps > 0
        else 0.0
    )
    return PairedComparison(base, guided, deltas, float(reduction))
