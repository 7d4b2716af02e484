"""Hand-built miniature floorplans used by tests, docs, and demos."""

from __future__ import annotations

import numpy as np

from semsight.floorgen import Floorplan, floorplan_from_labels
from semsight.grids import SemClass


def tiny_two_room() -> Floorplan:
    """8x8 plan: a 4x2 bedroom and a 4x1 living room joined by one doorway.

    Outside ring, wall ring, a vertical splitting wall at column 4 with a
    doorway at row 3, and the entrance door on the right outer wall next
    to the living room. Smallest layout with two rooms, a door, and an
    entrance.
    """
    O, W = SemClass.OUTSIDE, SemClass.WALL
    B, L = SemClass.BEDROOM, SemClass.LIVING_ROOM
    D, E = SemClass.DOORWAY, SemClass.ENTRANCE_DOOR
    labels = np.array(
        [
            [O, O, O, O, O, O, O, O],
            [O, W, W, W, W, W, W, O],
            [O, W, B, B, W, L, W, O],
            [O, W, B, B, D, L, E, O],
            [O, W, B, B, W, L, W, O],
            [O, W, B, B, W, L, W, O],
            [O, W, W, W, W, W, W, O],
            [O, O, O, O, O, O, O, O],
        ],
        dtype=np.uint8,
    )
    return floorplan_from_labels(labels)


def tiny_three_room() -> Floorplan:
    """10x8 chain of bedroom - living room - kitchen with two doorways."""
    O, W = SemClass.OUTSIDE, SemClass.WALL
    B, L, K = SemClass.BEDROOM, SemClass.LIVING_ROOM, SemClass.KITCHEN
    D, E = SemClass.DOORWAY, SemClass.ENTRANCE_DOOR
    labels = np.array(
        [
            [O, O, O, O, O, O, O, O],
            [O, W, W, W, W, W, W, O],
            [O, W, B, B, W, L, W, O],
            [O, W, B, B, D, L, E, O],
            [O, W, W, W, W, L, W, O],
            [O, W, K, K, W, L, W, O],
            [O, W, K, K, D, L, W, O],
            [O, W, K, K, W, L, W, O],
            [O, W, W, W, W, W, W, O],
            [O, O, O, O, O, O, O, O],
        ],
        dtype=np.uint8,
    )
    return floorplan_from_labels(labels)
