"""Frontier-based exploration over a floorplan with an occluding range sensor.

The sensor has a circular field of view: a cell is sensed when it lies
within the radius and the supercover line back to the agent crosses no
wall/outside cell; obstacle cells themselves are sensed but terminate
rays. The agent repeatedly walks one cell toward the best frontier,
planning only through already-explored free cells. Sensing happens once
at the start pose before any motion, so the first frame is non-empty.

Everything here is deterministic given (plan, start, radius).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from semsight.floorgen import Floorplan
from semsight.grids import NEIGHBORS_4, Pose, SemClass, as_mask, obstacle_mask

UtilityFn = Callable[[list[Pose], np.ndarray], np.ndarray]


class SimulationInvariantError(RuntimeError):
    """The exploration loop reached a state it cannot make progress from."""


def supercover_line(r0: int, c0: int, r1: int, c1: int) -> list[tuple[int, int]]:
    """All grid cells touched by the segment between two cell centers.

    Unlike Bresenham, corner crossings contribute both side cells, so the
    result is a 4-connected corridor and occlusion checks are conservative.
    """
    cells = [(r0, c0)]
    nr, nc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    r, c = r0, c0
    ir = ic = 0
    while ir < nr or ic < nc:
        decision = (1 + 2 * ir) * nc - (1 + 2 * ic) * nr
        if decision == 0:
            cells.append((r + sr, c))
            cells.append((r, c + sc))
            r += sr
            c += sc
            ir += 1
            ic += 1
        elif decision < 0:
            r += sr
            ir += 1
        else:
            c += sc
            ic += 1
        cells.append((r, c))
    return cells


class _RayTable:
    """Per-radius cache of sensor offsets and their occlusion paths."""

    def __init__(self, radius: int):
        self.radius = radius
        offsets = [
            (dr, dc)
            for dr in range(-radius, radius + 1)
            for dc in range(-radius, radius + 1)
            if dr * dr + dc * dc <= radius * radius
        ]
        paths = [supercover_line(0, 0, dr, dc)[1:-1] for dr, dc in offsets]
        max_len = max((len(p) for p in paths), default=0)
        # pad with (0, 0): the pose cell is free, so padding never blocks
        inter = np.zeros((len(offsets), max(max_len, 1), 2), dtype=np.int32)
        for i, path in enumerate(paths):
            for j, cell in enumerate(path):
                inter[i, j] = cell
        self.offsets = np.array(offsets, dtype=np.int32)
        self.inter = inter


_RAY_TABLES: dict[int, _RayTable] = {}


def _ray_table(radius: int) -> _RayTable:
    if radius not in _RAY_TABLES:
        _RAY_TABLES[radius] = _RayTable(radius)
    return _RAY_TABLES[radius]


def _padded_obstruction(plan: Floorplan, radius: int) -> np.ndarray:
    """Obstruction mask padded by ``radius`` with blocked cells, cached on the plan."""
    cache = plan.__dict__.setdefault("_padded_obstruction", {})
    if radius not in cache:
        cache[radius] = np.pad(~plan.free, radius, constant_values=True)
    return cache[radius]


def visible_mask(plan: Floorplan, pose: Pose, radius: int) -> np.ndarray:
    """Boolean mask of cells sensed from ``pose``."""
    h, w = plan.labels.shape
    out = np.zeros((h, w), dtype=bool)
    if radius == 0:
        out[pose] = True
        return out
    table = _ray_table(radius)
    padded = _padded_obstruction(plan, radius)
    pr, pc = pose[0] + radius, pose[1] + radius
    blocked = padded[pr + table.inter[:, :, 0], pc + table.inter[:, :, 1]].any(axis=1)
    targets = table.offsets + (pose[0], pose[1])
    in_bounds = (
        (targets[:, 0] >= 0)
        & (targets[:, 0] < h)
        & (targets[:, 1] >= 0)
        & (targets[:, 1] < w)
    )
    keep = ~blocked & in_bounds
    out[targets[keep, 0], targets[keep, 1]] = True
    return out


def visible_cells(plan: Floorplan, pose: Pose, radius: int) -> set[tuple[int, int]]:
    """Cells within ``radius`` of ``pose`` with unobstructed line of sight."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if not plan.free[pose[0], pose[1]]:
        raise ValueError(f"pose {pose} is not on a free cell")
    mask = visible_mask(plan, pose, radius)
    return {tuple(map(int, rc)) for rc in np.argwhere(mask)}


def detect_frontiers(
    explored: np.ndarray,
    obstacles_seen: np.ndarray,
    is_free: Optional[np.ndarray] = None,
) -> list[Pose]:
    """Explored free cells 4-adjacent to at least one unexplored cell.

    Returned sorted by (row, col). ``is_free`` defaults to the explored
    non-obstacle cells, which is all the agent can know.
    """
    explored = as_mask(explored)
    obstacles_seen = as_mask(obstacles_seen, like=explored)
    free = as_mask(is_free, like=explored) if is_free is not None else explored & ~obstacles_seen
    # cells beyond the grid edge do not count as unexplored
    padded = np.pad(explored, 1, constant_values=True)
    has_unexplored = (
        ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
    )
    frontier = explored & free & has_unexplored
    return [Pose(int(r), int(c)) for r, c in np.argwhere(frontier)]


@dataclass(eq=False)
class ObservationFrame:
    """Immutable snapshot of the agent's knowledge after sensing at a step."""

    pose: Pose
    trajectory: np.ndarray
    explored: np.ndarray
    obstacles_seen: np.ndarray
    step: int
    gt_onehot: np.ndarray = field(repr=False)

    @cached_property
    def local_semantics(self) -> np.ndarray:
        """Ground-truth one-hot channels on explored cells, zero elsewhere."""
        return self.gt_onehot * self.explored[:, :, None]

    @property
    def shape(self) -> tuple[int, int]:
        return self.explored.shape


@dataclass(eq=False)
class ExplorationState:
    """Mutable-looking but copy-on-write exploration state; treat as immutable."""

    plan: Floorplan
    pose: Pose
    trajectory: np.ndarray
    explored: np.ndarray
    obstacles_seen: np.ndarray
    step: int = 0
    complete: bool = False
    last_frontier: Optional[Pose] = None
    last_utility: float = 0.0

    def frame(self) -> ObservationFrame:
        return ObservationFrame(
            pose=self.pose,
            trajectory=self.trajectory,
            explored=self.explored,
            obstacles_seen=self.obstacles_seen,
            step=self.step,
            gt_onehot=self.plan.onehot,
        )


def initial_state(plan: Floorplan, start: Pose, radius: int) -> ExplorationState:
    """Sense once at the start pose and return the step-0 state."""
    start = Pose(*start)
    if not plan.free[start.row, start.col]:
        raise ValueError(f"start {start} is not on a free cell")
    vis = visible_mask(plan, start, radius)
    trajectory = np.zeros(plan.labels.shape, dtype=bool)
    trajectory[start.row, start.col] = True
    obstacles = vis & ~plan.free
    return ExplorationState(
        plan=plan,
        pose=start,
        trajectory=trajectory,
        explored=vis,
        obstacles_seen=obstacles,
        step=0,
    )


def _bfs_over(mask: np.ndarray, start: Pose) -> tuple[np.ndarray, np.ndarray]:
    """BFS distances and parent directions over True cells of ``mask``.

    Neighbor order is fixed (up, down, left, right) so shortest paths are
    deterministic. parent[cell] is the NEIGHBORS_4 index used to reach it.
    """
    h, w = mask.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    parent = np.full((h, w), -1, dtype=np.int8)
    if not mask[start[0], start[1]]:
        return dist, parent
    dist[start[0], start[1]] = 0
    queue = deque([(start[0], start[1])])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for k, (dr, dc) in enumerate(NEIGHBORS_4):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = d
                parent[nr, nc] = k
                queue.append((nr, nc))
    return dist, parent


def _first_step_toward(parent: np.ndarray, start: Pose, goal: Pose) -> Pose:
    r, c = goal
    prev = goal
    while (r, c) != (start[0], start[1]):
        k = parent[r, c]
        prev = Pose(int(r), int(c))
        r -= NEIGHBORS_4[k][0]
        c -= NEIGHBORS_4[k][1]
    return prev


def step_explore(
    state: ExplorationState,
    radius: int,
    utility_fn: Optional[UtilityFn] = None,
) -> ExplorationState:
    """Advance one cell toward the best frontier and sense at the new pose.

    The default policy targets the nearest frontier by BFS distance through
    explored free cells, ties broken by smallest (row, col). A ``utility_fn``
    may re-rank frontiers; distance then (row, col) still break utility ties,
    so an all-zero utility reproduces the nearest-frontier baseline exactly.
    """
    if state.complete:
        return state
    frontiers = detect_frontiers(state.explored, state.obstacles_seen)
    if not frontiers:
        return replace(state, complete=True)

    known_free = state.explored & ~state.obstacles_seen
    dist, parent = _bfs_over(known_free, state.pose)
    dists = np.array([dist[f.row, f.col] for f in frontiers], dtype=np.int64)
    reachable = dists >= 0
    if not reachable.any():
        raise SimulationInvariantError(
            f"pose {state.pose} cannot reach any of {len(frontiers)} frontiers"
        )
    utilities = (
        np.asarray(utility_fn(frontiers, dists), dtype=np.float64)
        if utility_fn is not None
        else np.zeros(len(frontiers))
    )
    order = sorted(
        (i for i in range(len(frontiers)) if reachable[i]),
        key=lambda i: (-utilities[i], dists[i], frontiers[i].row, frontiers[i].col),
    )
    target = frontiers[order[0]]
    if target == state.pose:
        raise SimulationInvariantError(
            f"stalled: pose {state.pose} is its own best frontier (radius={radius})"
        )

    new_pose = _first_step_toward(parent, state.pose, target)
    vis = visible_mask(state.plan, new_pose, radius)
    trajectory = state.trajectory.copy()
    trajectory[new_pose.row, new_pose.col] = True
    explored = state.explored | vis
    obstacles = state.obstacles_seen | (vis & ~state.plan.free)
    return ExplorationState(
        plan=state.plan,
        pose=new_pose,
        trajectory=trajectory,
        explored=explored,
        obstacles_seen=obstacles,
        step=state.step + 1,
        last_frontier=target,
        last_utility=float(utilities[order[0]]),
    )


def run_exploration(
    plan: Floorplan,
    start: Pose,
    max_steps: int = 200,
    radius: int = 8,
    keep_first: int = 20,
) -> list[ObservationFrame]:
    """Run frontier exploration and return the first ``keep_first`` frames.

    One frame per step, frame 0 holding the initial sensing at the start
    pose; the run ends at ``max_steps`` moves or when no frontier remains.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if radius < 1:
        raise ValueError("exploration needs a sensing radius >= 1")
    state = initial_state(plan, start, radius)
    frames = [state.frame()]
    while state.step < max_steps:
        state = step_explore(state, radius)
        if state.complete:
            break
        frames.append(state.frame())
    return frames[:keep_first]
