import hashlib

import numpy as np
import pytest
from scipy import ndimage

from semsight.fixtures import tiny_two_room
from semsight.floorgen import (
    FloorplanSpec,
    GenerationError,
    SpecError,
    floorplan_from_labels,
    generate_floorplan,
    validate_floorplan,
)
from semsight.grids import NEIGHBORS_4, SemClass

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def test_determinism_bit_identical():
    spec = FloorplanSpec(seed=42)
    a = generate_floorplan(spec)
    b = generate_floorplan(spec)
    assert a.labels.tobytes() == b.labels.tobytes()


def test_two_room_quota_gives_one_of_each():
    spec = FloorplanSpec(
        seed=5,
        room_count_range=(2, 2),
        class_quota={SemClass.LIVING_ROOM: (1, 1), SemClass.BEDROOM: (1, 1)},
    )
    plan = generate_floorplan(spec)
    # independent component count straight from the labels
    _, n_bed = ndimage.label(plan.labels == SemClass.BEDROOM, structure=_STRUCT_4)
    _, n_liv = ndimage.label(plan.labels == SemClass.LIVING_ROOM, structure=_STRUCT_4)
    assert n_bed == 1 and n_liv == 1
    assert validate_floorplan(plan, spec).ok


def test_validation_sweep_1000_seeds():
    for seed in range(1000):
        spec = FloorplanSpec(seed=seed)
        plan = generate_floorplan(spec)
        report = validate_floorplan(plan, spec)
        assert report.ok, f"seed {seed}: {report.violations}"


def test_golden_rasters_frozen():
    # digests pin the generator; any algorithm or PRNG change must be deliberate
    digests = {}
    for seed in (1, 2, 3):
        plan = generate_floorplan(FloorplanSpec(seed=seed))
        digests[seed] = hashlib.sha256(plan.labels.tobytes()).hexdigest()[:16]
    assert digests == {
        1: "7618e7221ce5af1b",
        2: "fd8c603ab1e67b21",
        3: "3bf58f9e65d02ea2",
    }


def test_doorways_touch_exactly_two_rooms():
    for seed in range(25):
        plan = generate_floorplan(FloorplanSpec(seed=seed))
        for door in plan.doors:
            assert len(door.rooms) == 2
            classes = {plan.rooms[i].class_id for i in door.rooms}
            assert classes  # both indices valid


def test_free_space_single_component():
    for seed in range(25):
        plan = generate_floorplan(FloorplanSpec(seed=seed))
        comp, n = ndimage.label(plan.free, structure=_STRUCT_4)
        assert n == 1


class TestValidator:
    def test_tiny_fixture_clean(self, tiny):
        assert validate_floorplan(tiny).ok

    def test_doorway_to_wall_breaks_reachability(self, tiny):
        labels = tiny.labels.copy()
        labels[3, 4] = SemClass.WALL
        report = validate_floorplan(floorplan_from_labels(labels))
        assert any("unreachable from entrance" in v for v in report.violations)

    def test_border_violation(self, tiny):
        labels = tiny.labels.copy()
        labels[0, 3] = SemClass.WALL
        report = validate_floorplan(floorplan_from_labels(labels))
        assert any(v.startswith("border") for v in report.violations)

    def test_quota_violation_reported(self, tiny):
        spec = FloorplanSpec(
            seed=0,
            room_count_range=(2, 4),
            class_quota={SemClass.LIVING_ROOM: (1, 1), SemClass.BEDROOM: (2, 3)},
        )
        report = validate_floorplan(tiny, spec)  # tiny has only one bedroom
        assert any(v.startswith("quota") for v in report.violations)


class TestSpecValidation:
    def test_min_room_side_too_small(self):
        with pytest.raises(SpecError, match="min_room_side"):
            FloorplanSpec(min_room_side=1)

    def test_grid_too_small(self):
        with pytest.raises(SpecError):
            FloorplanSpec(height=7)

    def test_unsatisfiable_quota(self):
        with pytest.raises(SpecError, match="unsatisfiable"):
            FloorplanSpec(
                room_count_range=(5, 6),
                class_quota={SemClass.LIVING_ROOM: (1, 1), SemClass.BEDROOM: (1, 1)},
            )

    def test_living_room_quota_required(self):
        with pytest.raises(SpecError, match="living_room"):
            FloorplanSpec(class_quota={SemClass.BEDROOM: (1, 3)})

    def test_generation_error_carries_seed(self):
        # 8x8 interior cannot host 9 rooms with 3-cell sides
        spec = FloorplanSpec(
            height=8, width=8, seed=77, room_count_range=(9, 9),
            class_quota={SemClass.LIVING_ROOM: (1, 1), SemClass.BEDROOM: (8, 8)},
        )
        with pytest.raises(GenerationError) as err:
            generate_floorplan(spec)
        assert err.value.seed == 77


def test_sidecar_round_trips_structure(tmp_path, tiny):
    from semsight.floorgen import read_sidecar, write_sidecar

    path = tmp_path / "tiny.meta"
    plan = tiny_two_room()
    write_sidecar(plan, path)
    meta = read_sidecar(path)
    assert meta["rooms"] == "2"
    assert meta["entrance"] == "3,6"
    assert meta["room.0"].startswith("bedroom:")
    assert meta["door.0"] == "3,4:0,1"
