"""Deterministic procedural floorplan generation and structural validation.

Layouts are built by recursive binary space partition of the dwelling
interior with 1-cell-thick walls: leaf rectangles become rooms, every
cut receives one doorway, and a single entrance door replaces an outer
wall cell next to the living room. The PRNG is ``random.Random`` seeded
with a 64-bit seed; between retries the seed advances by a fixed odd
constant, so generation is a pure function of the FloorplanSpec.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from semsight.grids import (
    AREA_CLASSES,
    NEIGHBORS_4,
    NUM_CLASSES,
    Pose,
    SemClass,
    as_labels,
    free_mask,
    onehot_encode,
)

#: Default per-class [min, max] room-count quotas.
DEFAULT_QUOTA: dict[SemClass, tuple[int, int]] = {
    SemClass.LIVING_ROOM: (1, 1),
    SemClass.BEDROOM: (1, 3),
    SemClass.KITCHEN: (0, 1),
    SemClass.BATHROOM: (0, 2),
    SemClass.BALCONY: (0, 1),
    SemClass.STORAGE: (0, 1),
}

_RETRY_BUDGET = 32
_SEED_STRIDE = 0x9E3779B97F4A7C15  # odd, so all 2**64 retry seeds are distinct
_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class SpecError(ValueError):
    """Floorplan spec violates its invariants."""


class GenerationError(RuntimeError):
    """No valid floorplan found within the retry budget; carries the seed."""

    def __init__(self, message: str, seed: int):
        super().__init__(f"{message} (seed={seed})")
        self.seed = seed


@dataclass(frozen=True)
class FloorplanSpec:
    """Parameters controlling procedural generation."""

    height: int = 32
    width: int = 32
    seed: int = 0
    room_count_range: tuple[int, int] = (3, 6)
    min_room_side: int = 3
    class_quota: Mapping[SemClass, tuple[int, int]] = field(
        default_factory=lambda: dict(DEFAULT_QUOTA)
    )

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise SpecError("height and width must be >= 8")
        if self.min_room_side < 2:
            raise SpecError("min_room_side must be >= 2")
        lo, hi = self.room_count_range
        if lo < 1 or hi < lo:
            raise SpecError(f"bad room_count_range {self.room_count_range}")
        for cls, (qlo, qhi) in self.class_quota.items():
            if SemClass(cls) not in AREA_CLASSES:
                raise SpecError(f"quota for non-room class {cls!r}")
            if qlo < 0 or qhi < qlo:
                raise SpecError(f"bad quota for {cls!r}: ({qlo}, {qhi})")
        living = self.class_quota.get(SemClass.LIVING_ROOM, (0, 0))
        if living[0] < 1:
            raise SpecError(
                "living_room quota min must be >= 1: the entrance door is "
                "placed on the outer wall next to the living room"
            )
        if not self.feasible_room_counts():
            raise SpecError("quotas unsatisfiable within room_count_range")

    def feasible_room_counts(self) -> range:
        """Room counts satisfying both room_count_range and the quotas."""
        qmin = sum(lo for lo, _ in self.class_quota.values())
        qmax = sum(hi for _, hi in self.class_quota.values())
        lo = max(self.room_count_range[0], qmin, 1)
        hi = min(self.room_count_range[1], qmax)
        return range(lo, hi + 1)


@dataclass(frozen=True)
class Room:
    """A 4-connected set of same-class room cells."""

    class_id: SemClass
    cells: tuple[tuple[int, int], ...]

    @property
    def area(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class Door:
    """A doorway cell and the indices of the two rooms it joins."""

    cell: tuple[int, int]
    rooms: tuple[int, ...]


@dataclass(eq=False)
class Floorplan:
    """A labelled grid plus its derived room/door/entrance structure."""

    labels: np.ndarray
    rooms: list[Room]
    doors: list[Door]
    entrance: Optional[tuple[int, int]]
    seed: Optional[int] = None

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @cached_property
    def onehot(self) -> np.ndarray:
        return onehot_encode(self.labels)

    @cached_property
    def free(self) -> np.ndarray:
        return free_mask(self.labels)

    def room_id_map(self) -> np.ndarray:
        """Per-cell room index, -1 on non-room cells."""
        out = np.full(self.labels.shape, -1, dtype=np.int32)
        for idx, room in enumerate(self.rooms):
            for r, c in room.cells:
                out[r, c] = idx
        return out


@dataclass
class ValidationReport:
    """Structural-invariant violations; empty means the plan is valid."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def floorplan_from_labels(labels: np.ndarray, seed: Optional[int] = None) -> Floorplan:
    """Derive rooms, doors, and the entrance from a label grid alone."""
    arr = as_labels(labels)
    rooms: list[Room] = []
    room_ids = np.full(arr.shape, -1, dtype=np.int32)
    for cls in AREA_CLASSES:
        comp, n = ndimage.label(arr == cls, structure=_STRUCT_4)
        for k in range(1, n + 1):
            cells = tuple(map(tuple, np.argwhere(comp == k)))
            room_ids[comp == k] = len(rooms)
            rooms.append(Room(cls, cells))

    doors: list[Door] = []
    for r, c in map(tuple, np.argwhere(arr == SemClass.DOORWAY)):
        adjacent = set()
        for dr, dc in NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < arr.shape[0] and 0 <= nc < arr.shape[1] and room_ids[nr, nc] >= 0:
                adjacent.add(int(room_ids[nr, nc]))
        doors.append(Door((int(r), int(c)), tuple(sorted(adjacent))))

    entrances = [tuple(map(int, rc)) for rc in np.argwhere(arr == SemClass.ENTRANCE_DOOR)]
    entrance = entrances[0] if entrances else None
    return Floorplan(arr, rooms, doors, entrance, seed=seed)


# ---------------------------------------------------------------------------
# generation

@dataclass
class _Rect:
    # inclusive bounds within the room area
    r0: int
    c0: int
    r1: int
    c1: int

    @property
    def height(self) -> int:
        return self.r1 - self.r0 + 1

    @property
    def width(self) -> int:
        return self.c1 - self.c0 + 1

    @property
    def area(self) -> int:
        return self.height * self.width

    def touches(self, bounds: "_Rect") -> bool:
        return (
            self.r0 == bounds.r0
            or self.c0 == bounds.c0
            or self.r1 == bounds.r1
            or self.c1 == bounds.c1
        )


@dataclass
class _Cut:
    axis: str  # "h" splits rows, "v" splits cols
    line: int
    rect: _Rect


def _split_candidates(rect: _Rect, min_side: int) -> dict[str, range]:
    axes = {}
    if rect.height >= 2 * min_side + 1:
        axes["h"] = range(rect.r0 + min_side, rect.r1 - min_side + 1)
    if rect.width >= 2 * min_side + 1:
        axes["v"] = range(rect.c0 + min_side, rect.c1 - min_side + 1)
    return axes


def _partition(rng: random.Random, bounds: _Rect, n_rooms: int, min_side: int):
    """Split ``bounds`` into n_rooms leaf rects; returns (leaves, cuts) or None."""
    leaves = [bounds]
    cuts: list[_Cut] = []
    while len(leaves) < n_rooms:
        splittable = [
            (i, cand)
            for i, leaf in enumerate(leaves)
            if (cand := _split_candidates(leaf, min_side))
        ]
        if not splittable:
            return None
        # favor large leaves so room sizes stay balanced
        weights = [leaves[i].area for i, _ in splittable]
        pick = rng.choices(range(len(splittable)), weights=weights, k=1)[0]
        idx, cand = splittable[pick]
        rect = leaves.pop(idx)
        if len(cand) == 2:
            axis = "h" if rect.height > rect.width else "v" if rect.width > rect.height else rng.choice("hv")
        else:
            axis = next(iter(cand))
        line = rng.choice(list(cand[axis]))
        if axis == "h":
            first = _Rect(rect.r0, rect.c0, line - 1, rect.c1)
            second = _Rect(line + 1, rect.c0, rect.r1, rect.c1)
        else:
            first = _Rect(rect.r0, rect.c0, rect.r1, line - 1)
            second = _Rect(rect.r0, line + 1, rect.r1, rect.c1)
        cuts.append(_Cut(axis, line, rect))
        leaves.extend([first, second])
    return leaves, cuts


def _draw_classes(rng: random.Random, n_rooms: int, quota) -> list[SemClass]:
    """Sample a quota-respecting multiset of n_rooms room classes."""
    classes = []
    for cls, (lo, _) in sorted(quota.items()):
        classes.extend([SemClass(cls)] * lo)
    while len(classes) < n_rooms:
        open_classes = [
            SemClass(cls)
            for cls, (_, hi) in sorted(quota.items())
            if classes.count(SemClass(cls)) < hi
        ]
        if not open_classes:
            return []
        classes.append(rng.choice(open_classes))
    return classes


def _attempt(rng: random.Random, spec: FloorplanSpec) -> Optional[np.ndarray]:
    h, w = spec.height, spec.width
    bounds = _Rect(2, 2, h - 3, w - 3)
    n_rooms = rng.choice(list(spec.feasible_room_counts()))

    result = _partition(rng, bounds, n_rooms, spec.min_room_side)
    if result is None:
        return None
    leaves, cuts = result

    classes = _draw_classes(rng, n_rooms, spec.class_quota)
    if not classes:
        return None
    edge_leaves = [i for i, leaf in enumerate(leaves) if leaf.touches(bounds)]
    if not edge_leaves:
        return None
    living_at = rng.choice(edge_leaves)
    others = [c for c in classes if c != SemClass.LIVING_ROOM] + \
        [SemClass.LIVING_ROOM] * (classes.count(SemClass.LIVING_ROOM) - 1)
    rng.shuffle(others)

    labels = np.full((h, w), int(SemClass.OUTSIDE), dtype=np.uint8)
    labels[1:h - 1, 1:w - 1] = SemClass.WALL
    assignment = {}
    it = iter(others)
    for i, leaf in enumerate(leaves):
        cls = SemClass.LIVING_ROOM if i == living_at else next(it)
        assignment[i] = cls
        labels[leaf.r0:leaf.r1 + 1, leaf.c0:leaf.c1 + 1] = cls

    # one doorway per cut, where both sides across the wall are room cells
    for cut in cuts:
        if cut.axis == "h":
            positions = [
                (cut.line, c)
                for c in range(cut.rect.c0, cut.rect.c1 + 1)
                if labels[cut.line - 1, c] < len(AREA_CLASSES)
                and labels[cut.line + 1, c] < len(AREA_CLASSES)
            ]
        else:
            positions = [
                (r, cut.line)
                for r in range(cut.rect.r0, cut.rect.r1 + 1)
                if labels[r, cut.line - 1] < len(AREA_CLASSES)
                and labels[r, cut.line + 1] < len(AREA_CLASSES)
            ]
        if not positions:
            return None
        labels[rng.choice(positions)] = SemClass.DOORWAY

    # entrance on the outer wall ring, adjacent to a living-room cell
    ring_candidates = []
    for c in range(2, w - 2):
        if labels[2, c] == SemClass.LIVING_ROOM:
            ring_candidates.append((1, c))
        if labels[h - 3, c] == SemClass.LIVING_ROOM:
            ring_candidates.append((h - 2, c))
    for r in range(2, h - 2):
        if labels[r, 2] == SemClass.LIVING_ROOM:
            ring_candidates.append((r, 1))
        if labels[r, w - 3] == SemClass.LIVING_ROOM:
            ring_candidates.append((r, w - 2))
    if not ring_candidates:
        return None
    labels[rng.choice(ring_candidates)] = SemClass.ENTRANCE_DOOR
    return labels


def generate_floorplan(spec: FloorplanSpec) -> Floorplan:
    """Generate a floorplan; identical specs yield bit-identical output."""
    for attempt in range(_RETRY_BUDGET):
        attempt_seed = (spec.seed + attempt * _SEED_STRIDE) % (1 << 64)
        rng = random.Random(attempt_seed)
        labels = _attempt(rng, spec)
        if labels is None:
            continue
        plan = floorplan_from_labels(labels, seed=spec.seed)
        if validate_floorplan(plan, spec).ok:
            return plan
    raise GenerationError(
        f"no valid floorplan in {_RETRY_BUDGET} attempts", seed=spec.seed
    )


# ---------------------------------------------------------------------------
# validation

def validate_floorplan(plan: Floorplan, spec: Optional[FloorplanSpec] = None) -> ValidationReport:
    """Check all structural invariants; violations become report entries."""
    report = ValidationReport()
    labels = plan.labels
    h, w = labels.shape

    border = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    if (border != SemClass.OUTSIDE).any():
        report.add("border: non-outside cell on the grid border")

    room_ids = plan.room_id_map()
    is_room_cell = labels < len(AREA_CLASSES)
    if (is_room_cell & (room_ids < 0)).any():
        report.add("coverage: room-class cell not covered by any room")
    for idx, room in enumerate(plan.rooms):
        cells = np.array(room.cells)
        if (labels[cells[:, 0], cells[:, 1]] != room.class_id).any():
            report.add(f"coverage: room {idx} contains foreign-class cells")
        comp, n = ndimage.label(room_ids == idx, structure=_STRUCT_4)
        if n != 1:
            report.add(f"connectivity: room {idx} is not 4-connected")

    if plan.entrance is None:
        report.add("entrance: missing entrance_door cell")
    else:
        n_entrances = int((labels == SemClass.ENTRANCE_DOOR).sum())
        if n_entrances != 1:
            report.add(f"entrance: expected exactly 1 entrance cell, found {n_entrances}")
        er, ec = plan.entrance
        touches_room = any(
            0 <= er + dr < h and 0 <= ec + dc < w and labels[er + dr, ec + dc] < len(AREA_CLASSES)
            for dr, dc in NEIGHBORS_4
        )
        if not touches_room:
            report.add("entrance: not adjacent to any room cell")
        reached = _bfs_free(plan.free, plan.entrance)
        for idx, room in enumerate(plan.rooms):
            if not reached[room.cells[0]]:
                report.add(
                    f"connectivity: room {idx} ({room.class_id.name.lower()}) "
                    "unreachable from entrance"
                )

    for door in plan.doors:
        if len(door.rooms) != 2:
            report.add(
                f"doorway: cell {door.cell} adjacent to {len(door.rooms)} rooms, expected 2"
            )

    if spec is not None:
        n_rooms = len(plan.rooms)
        lo, hi = spec.room_count_range
        if not lo <= n_rooms <= hi:
            report.add(f"quota: {n_rooms} rooms outside range [{lo}, {hi}]")
        for cls, (qlo, qhi) in spec.class_quota.items():
            count = sum(1 for room in plan.rooms if room.class_id == cls)
            if not qlo <= count <= qhi:
                report.add(
                    f"quota: {count} {SemClass(cls).name.lower()} rooms outside "
                    f"[{qlo}, {qhi}]"
                )
    return report


def _bfs_free(free: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """Reachability mask over free cells, 4-connected."""
    from collections import deque

    h, w = free.shape
    seen = np.zeros_like(free)
    if not free[start]:
        return seen
    seen[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return seen


def reachable_free_cells(plan: Floorplan, start: tuple[int, int]) -> np.ndarray:
    """Free cells reachable from ``start`` through free space."""
    return _bfs_free(plan.free, start)


# ---------------------------------------------------------------------------
# sidecar metadata

def write_sidecar(plan: Floorplan, destination) -> None:
    """Write the textual key=value sidecar describing a generated plan."""
    lines = [
        f"seed={plan.seed if plan.seed is not None else ''}",
        f"height={plan.height}",
        f"width={plan.width}",
        f"rooms={len(plan.rooms)}",
    ]
    for i, room in enumerate(plan.rooms):
        cells = ";".join(f"{r},{c}" for r, c in room.cells)
        lines.append(f"room.{i}={room.class_id.name.lower()}:{cells}")
    for i, door in enumerate(plan.doors):
        rooms = ",".join(str(x) for x in door.rooms)
        lines.append(f"door.{i}={door.cell[0]},{door.cell[1]}:{rooms}")
    if plan.entrance is not None:
        lines.append(f"entrance={plan.entrance[0]},{plan.entrance[1]}")
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="ascii") as fh:
            fh.write(text)


def read_sidecar(source) -> dict[str, str]:
    """Parse a sidecar back into a flat key -> value dict."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out
