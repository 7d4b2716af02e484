"""Semantic grid data model, mask algebra, and the SEMGRIDv1 raster format.

Grids are plain numpy arrays with fixed conventions:

* label grid   -- (H, W) uint8, one class id per cell
* semantic grid -- (H, W, C) float, per-channel values in [0, 1]
* bit mask     -- (H, W) bool

A one-hot semantic grid sums to exactly 1 across channels at every cell;
probabilistic grids carry independent per-channel probabilities and need
not sum to 1. All adjacency in this package is 4-connected.
"""

from __future__ import annotations

import io
import os
from enum import IntEnum
from typing import BinaryIO, NamedTuple, Union

import numpy as np


class SemClass(IntEnum):
    """The 10 semantic channels: 7 room classes, walls, entrance doors, outside."""

    BEDROOM = 0
    LIVING_ROOM = 1
    KITCHEN = 2
    BATHROOM = 3
    BALCONY = 4
    STORAGE = 5
    DOORWAY = 6
    WALL = 7
    ENTRANCE_DOOR = 8
    OUTSIDE = 9


NUM_CLASSES = 10
CLASS_NAMES = tuple(c.name.lower() for c in SemClass)
#: Classes a predictor may be queried for (the 7 room classes).
QUERY_CLASSES = tuple(SemClass(i) for i in range(7))
#: Classes that form room components (rooms proper, excluding doorway cells).
AREA_CLASSES = tuple(SemClass(i) for i in range(6))
#: Classes an agent can stand on / move through.
FREE_CLASSES = frozenset({*range(7), SemClass.ENTRANCE_DOOR})
#: Classes that block movement and line of sight.
OBSTACLE_CLASSES = frozenset({SemClass.WALL, SemClass.OUTSIDE})

#: 4-connected neighborhood, fixed order (up, down, left, right).
NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


class Pose(NamedTuple):
    """Grid cell occupied by the agent."""

    row: int
    col: int


class GridError(ValueError):
    """Invalid grid contents or mismatched shapes."""


class RasterError(ValueError):
    """Base class for SEMGRIDv1 format violations."""


class BadMagicError(RasterError):
    """Header does not start with the SEMGRIDv1 magic token."""


class DimensionError(RasterError):
    """Header dimensions are malformed, non-positive, oversized, or C != 10."""


class LabelRangeError(RasterError):
    """A payload byte is not a valid class id."""


class TruncatedPayloadError(RasterError):
    """Payload ends before H*W bytes."""


class TrailingDataError(RasterError):
    """Extra bytes found after the payload."""


_MAGIC = b"SEMGRIDv1"
_MAX_CELLS = 1 << 26  # allocation guard for hostile headers


def as_labels(labels: np.ndarray) -> np.ndarray:
    """Validate and return labels as a (H, W) uint8 array."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise GridError(f"label grid must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise GridError("label grid must be non-empty")
    if arr.min() < 0 or arr.max() >= NUM_CLASSES:
        raise GridError("label grid contains out-of-range class ids")
    return arr.astype(np.uint8, copy=False)


def as_mask(mask: np.ndarray, like: np.ndarray | None = None) -> np.ndarray:
    """Validate a boolean mask, optionally against a companion grid's shape."""
    arr = np.asarray(mask)
    if arr.dtype != np.bool_:
        raise GridError(f"mask must be boolean, got dtype {arr.dtype}")
    if arr.ndim != 2:
        raise GridError(f"mask must be 2-D, got shape {arr.shape}")
    if like is not None and arr.shape != like.shape[:2]:
        raise GridError(f"mask shape {arr.shape} does not match grid {like.shape[:2]}")
    return arr


def onehot_encode(labels: np.ndarray) -> np.ndarray:
    """Expand a categorical label grid into a (H, W, C) one-hot grid.

    Per-cell argmax of the result recovers the input exactly.
    """
    arr = as_labels(labels)
    out = np.zeros(arr.shape + (NUM_CLASSES,), dtype=np.float32)
    rows, cols = np.indices(arr.shape)
    out[rows, cols, arr] = 1.0
    return out


def apply_unexplored_mask(gt: np.ndarray, explored: np.ndarray) -> np.ndarray:
    """Zero out all channels of ``gt`` on explored cells.

    ``out[i, j, c] = gt[i, j, c] * (1 - explored[i, j])``; unexplored
    cells are returned bitwise identical to ``gt``.
    """
    grid = np.asarray(gt)
    if grid.ndim != 3:
        raise GridError(f"semantic grid must be 3-D, got shape {grid.shape}")
    mask = as_mask(explored, like=grid)
    out = grid.copy()
    out[mask] = 0
    return out


def write_raster(labels: np.ndarray, destination: Union[str, os.PathLike, BinaryIO]) -> None:
    """Write a label grid in SEMGRIDv1 format.

    One ASCII header line ``SEMGRIDv1 <H> <W> <C>\\n`` followed by exactly
    H*W row-major payload bytes, one class id per byte. Byte-exact: equal
    grids produce equal files.
    """
    arr = as_labels(labels)
    h, w = arr.shape
    header = f"SEMGRIDv1 {h} {w} {NUM_CLASSES}\n".encode("ascii")
    payload = arr.tobytes(order="C")
    if hasattr(destination, "write"):
        destination.write(header + payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(header + payload)


def read_raster(source: Union[str, os.PathLike, bytes, BinaryIO]) -> np.ndarray:
    """Read a SEMGRIDv1 file back into a (H, W) uint8 label grid.

    Raises a distinct :class:`RasterError` subclass per failure mode:
    bad magic, bad dimensions, out-of-range labels, truncated payload,
    or trailing bytes.
    """
    if isinstance(source, bytes):
        fh: BinaryIO = io.BytesIO(source)
    elif hasattr(source, "read"):
        fh = source  # type: ignore[assignment]
    else:
        with open(source, "rb") as opened:
            return read_raster(opened.read())

    header = fh.readline(256)
    if not header.endswith(b"\n"):
        raise BadMagicError("missing or overlong header line")
    parts = header[:-1].split(b" ")
    if len(parts) != 4 or parts[0] != _MAGIC:
        raise BadMagicError(f"not a SEMGRIDv1 header: {header!r}")
    try:
        h, w, c = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise DimensionError(f"non-integer dimensions in header: {header!r}") from exc
    if c != NUM_CLASSES:
        raise DimensionError(f"channel count must be {NUM_CLASSES} in v1, got {c}")
    if h <= 0 or w <= 0 or h * w > _MAX_CELLS:
        raise DimensionError(f"unreasonable dimensions {h}x{w}")

    payload = fh.read(h * w + 1)
    if len(payload) < h * w:
        raise TruncatedPayloadError(
            f"expected {h * w} payload bytes, found {len(payload)}"
        )
    if len(payload) > h * w:
        raise TrailingDataError("trailing data after payload")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    if arr.max() >= NUM_CLASSES:
        bad = int(arr.max())
        raise LabelRangeError(f"payload byte {bad} is not a class id")
    return arr.copy()


def free_mask(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of traversable cells (rooms, doorways, entrance door)."""
    arr = as_labels(labels)
    return (arr != SemClass.WALL) & (arr != SemClass.OUTSIDE)


def obstacle_mask(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of wall and outside cells."""
    return ~free_mask(labels)
