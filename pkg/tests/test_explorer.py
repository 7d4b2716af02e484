import numpy as np
import pytest

from semsight.explorer import (
    SimulationInvariantError,
    detect_frontiers,
    initial_state,
    run_exploration,
    step_explore,
    supercover_line,
    visible_cells,
)
from semsight.fixtures import tiny_two_room
from semsight.floorgen import floorplan_from_labels, reachable_free_cells
from semsight.grids import NEIGHBORS_4, Pose, SemClass


def corridor_plan():
    """Row corridor of 5 free cells with a wall at corridor column 2."""
    labels = np.full((3, 7), SemClass.OUTSIDE, dtype=np.uint8)
    labels[1, 1:6] = SemClass.BEDROOM
    labels[1, 3] = SemClass.WALL
    return floorplan_from_labels(labels)


def open_room_plan():
    labels = np.full((9, 9), SemClass.OUTSIDE, dtype=np.uint8)
    labels[1:8, 1:8] = SemClass.WALL
    labels[2:7, 2:7] = SemClass.BEDROOM
    return floorplan_from_labels(labels)


class TestVisibility:
    def test_radius_zero_sees_only_pose(self, tiny):
        assert visible_cells(tiny, Pose(2, 2), 0) == {(2, 2)}

    def test_corridor_occlusion(self):
        plan = corridor_plan()
        vis = visible_cells(plan, Pose(1, 1), 4)
        # corridor column k sits at grid (1, k+1)
        assert (1, 1) in vis and (1, 2) in vis
        assert (1, 3) in vis  # the wall itself is sensed
        assert (1, 4) not in vis and (1, 5) not in vis

    def test_open_room_fully_visible(self):
        plan = open_room_plan()
        vis = visible_cells(plan, Pose(4, 4), 10)
        room = {(r, c) for r in range(2, 7) for c in range(2, 7)}
        assert room <= vis

    def test_supercover_is_4_connected_corridor(self):
        for target in ((5, 3), (-4, 7), (2, -2), (0, 6), (-5, 0), (3, 3)):
            cells = supercover_line(0, 0, *target)
            assert cells[0] == (0, 0) and cells[-1] == target
            for a, b in zip(cells, cells[1:]):
                assert abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1 or (
                    abs(a[0] - b[0]) == 1 and abs(a[1] - b[1]) == 1
                )

    def test_pose_must_be_free(self, tiny):
        with pytest.raises(ValueError):
            visible_cells(tiny, Pose(0, 0), 3)


class TestFrontiers:
    def test_fully_explored_has_none(self, tiny):
        explored = np.ones(tiny.labels.shape, dtype=bool)
        obstacles = ~tiny.free
        assert detect_frontiers(explored, obstacles) == []

    def test_single_explored_center(self):
        explored = np.zeros((3, 3), dtype=bool)
        explored[1, 1] = True
        obstacles = np.zeros((3, 3), dtype=bool)
        assert detect_frontiers(explored, obstacles) == [Pose(1, 1)]

    def test_tiny_bedroom_frontier_matches_enumeration(self, tiny):
        explored = np.zeros(tiny.labels.shape, dtype=bool)
        for r in range(2, 6):
            for c in (2, 3):
                explored[r, c] = True
        obstacles = np.zeros(tiny.labels.shape, dtype=bool)
        got = detect_frontiers(explored, obstacles)

        expected = []
        for r in range(8):
            for c in range(8):
                if not explored[r, c]:
                    continue
                touches = any(
                    0 <= r + dr < 8 and 0 <= c + dc < 8 and not explored[r + dr, c + dc]
                    for dr, dc in NEIGHBORS_4
                )
                if touches:
                    expected.append(Pose(r, c))
        assert got == sorted(expected)
        assert got  # the column next to the unexplored doorway is a frontier


class TestStepExplore:
    def test_no_frontier_is_fixpoint(self, tiny):
        state = initial_state(tiny, Pose(2, 2), 2)
        state.explored[:] = True
        state.obstacles_seen[:] = ~tiny.free
        done = step_explore(state, 2)
        assert done.complete
        assert done.step == state.step
        assert (done.explored == state.explored).all()

    def test_explored_growth_is_monotone(self, small_plans):
        plan = small_plans[0]
        state = initial_state(plan, Pose(*plan.rooms[0].cells[0]), 8)
        for _ in range(40):
            prev = int(state.explored.sum())
            new = step_explore(state, 8)
            if new.complete:
                break
            assert int(new.explored.sum()) >= prev
            assert (state.explored & ~new.explored).sum() == 0
            state = new

    def test_tiny_golden_trajectory(self, tiny):
        frames = run_exploration(tiny, Pose(2, 2), max_steps=200, radius=2,
                                 keep_first=100)
        assert frames[-1].step <= 14
        assert [tuple(f.pose) for f in frames] == [
            (2, 2), (2, 3), (3, 3), (3, 4), (3, 5), (4, 5), (5, 5),
            (4, 5), (3, 5), (3, 4), (3, 3), (4, 3), (5, 3), (5, 2),
        ]
        assert (frames[-1].explored & tiny.free).sum() == tiny.free.sum()


class TestRunExploration:
    def test_keep_first_one(self, tiny):
        frames = run_exploration(tiny, Pose(2, 2), radius=2, keep_first=1)
        assert len(frames) == 1
        assert frames[0].step == 0
        assert frames[0].pose == Pose(2, 2)
        assert frames[0].explored.any()  # initial sensing happened

    def test_frames_ordered_and_nested(self, tiny):
        frames = run_exploration(tiny, Pose(2, 2), radius=2, keep_first=50)
        for earlier, later in zip(frames, frames[1:]):
            assert later.step == earlier.step + 1
            assert (earlier.explored & ~later.explored).sum() == 0

    def test_tiny_completes_with_full_reachable_coverage(self, tiny):
        frames = run_exploration(tiny, Pose(2, 2), max_steps=200, radius=2,
                                 keep_first=500)
        assert frames[-1].step < 200
        reach = reachable_free_cells(tiny, (2, 2))
        assert ((frames[-1].explored & reach) == reach).all()

    def test_deterministic(self, small_plans):
        plan = small_plans[1]
        start = Pose(*plan.rooms[0].cells[0])
        a = run_exploration(plan, start, radius=8, keep_first=30)
        b = run_exploration(plan, start, radius=8, keep_first=30)
        assert len(a) == len(b)
        for fa, fb in zip(a, b):
            assert fa.pose == fb.pose
            assert (fa.explored == fb.explored).all()


class TestInvariants:
    def test_local_semantics_matches_gt_on_explored(self, tiny):
        frames = run_exploration(tiny, Pose(2, 2), radius=2, keep_first=6)
        onehot = tiny.onehot
        for frame in frames:
            local = frame.local_semantics
            assert (local[frame.explored] == onehot[frame.explored]).all()
            assert (local[~frame.explored] == 0).all()

    def test_obstacles_seen_are_gt_obstacles(self, small_plans):
        plan = small_plans[2]
        frames = run_exploration(plan, Pose(*plan.rooms[0].cells[0]),
                                 radius=8, keep_first=20)
        for frame in frames:
            assert not (frame.obstacles_seen & plan.free).any()
            assert (frame.obstacles_seen & ~frame.explored).sum() == 0
            assert (frame.trajectory & ~frame.explored).sum() == 0
