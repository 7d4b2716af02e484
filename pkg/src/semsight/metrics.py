"""Region-restricted evaluation: PA, FWIoU, per-class P/R/F1, and
structural consistency.

All metrics run over the *evaluated region*: unexplored cells whose
ground-truth class is not ``outside`` (the exterior is never part of the
prediction task). With ``relax`` on, cells within Chebyshev distance 1
of any ground-truth inter-class boundary are additionally excluded, so
scores reward region recognition rather than exact boundary alignment.

Structural consistency compares room-adjacency relations: rooms are
4-connected components of the six room classes (doorways excluded),
edges are unordered class pairs joined by a door or by direct contact,
and the score is the F1 between predicted and ground-truth edge sets
over rooms that touch the unexplored region.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import ndimage

from semsight.grids import (
    AREA_CLASSES,
    NEIGHBORS_4,
    NUM_CLASSES,
    SemClass,
    as_labels,
    as_mask,
)
from semsight.predict import PredictionResult

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
DEFAULT_MIN_ROOM_AREA = 4


class EmptyRegionError(ValueError):
    """No cells left to evaluate after masking."""


def boundary_relax_mask(gt: np.ndarray) -> np.ndarray:
    """Cells within Chebyshev distance 1 of a ground-truth class boundary."""
    gt = as_labels(gt)
    padded = np.pad(gt, 1, mode="edge")
    near = np.zeros(gt.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            shifted = padded[1 + dr:1 + dr + gt.shape[0], 1 + dc:1 + dc + gt.shape[1]]
            near |= shifted != gt
    return near


def evaluated_mask(gt: np.ndarray, explored: np.ndarray, relax: bool) -> np.ndarray:
    """The cells metrics are computed over."""
    gt = as_labels(gt)
    explored = as_mask(explored, like=gt)
    mask = ~explored & (gt != SemClass.OUTSIDE)
    if relax:
        mask &= ~boundary_relax_mask(gt)
    if not mask.any():
        raise EmptyRegionError("no unexplored cells to evaluate")
    return mask


def pa_unexplored(
    pred: np.ndarray, gt: np.ndarray, explored: np.ndarray, relax: bool = True
) -> float:
    """Fraction of evaluated cells whose predicted class matches the truth."""
    pred = as_labels(pred)
    mask = evaluated_mask(gt, explored, relax)
    return float((pred[mask] == as_labels(gt)[mask]).mean())


def fwiou_unexplored(
    pred: np.ndarray, gt: np.ndarray, explored: np.ndarray, relax: bool = True
) -> float:
    """Per-class IoU weighted by ground-truth class frequency."""
    pred = as_labels(pred)
    gt = as_labels(gt)
    mask = evaluated_mask(gt, explored, relax)
    p, g = pred[mask], gt[mask]
    total = g.size
    # single final division keeps a perfect prediction at exactly 1.0
    weighted = 0.0
    for cls in range(NUM_CLASSES):
        gt_c = g == cls
        count = int(gt_c.sum())
        if count == 0:
            continue
        pred_c = p == cls
        inter = int((gt_c & pred_c).sum())
        union = int((gt_c | pred_c).sum())
        weighted += count * (inter / union)
    return float(weighted / total)


def class_prf(
    pred: np.ndarray,
    gt: np.ndarray,
    explored: np.ndarray,
    class_id: int,
    relax: bool = False,
) -> tuple[float, float, float]:
    """Binary recall/precision/F1 of one class over evaluated cells.

    Vacuous truth when the class is absent from both prediction and
    ground truth: all three scores are 1.0.
    """
    pred = as_labels(pred)
    gt = as_labels(gt)
    mask = evaluated_mask(gt, explored, relax)
    p = pred[mask] == class_id
    g = gt[mask] == class_id
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    recall = tp / (tp + fn) if tp + fn else 1.0
    precision = tp / (tp + fp) if tp + fp else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return float(recall), float(precision), float(f1)


# ---------------------------------------------------------------------------
# structural consistency

@dataclass
class AdjacencyGraph:
    """Room instances and the class-pair adjacency relations between them."""

    nodes: list[tuple[SemClass, tuple[tuple[int, int], ...]]]
    edges: set[tuple[int, int]] = field(default_factory=set)


def room_adjacency_graph(
    labels: np.ndarray,
    restrict: Optional[np.ndarray] = None,
    min_room_area: int = DEFAULT_MIN_ROOM_AREA,
) -> AdjacencyGraph:
    """Extract room components and their adjacency relations.

    Rooms below ``min_room_area`` are dropped; with ``restrict`` given,
    only rooms owning at least one restricted cell become nodes. An edge
    {a, b} is recorded as a sorted class-id pair when a doorway or
    entrance cell touches both rooms, or when the rooms touch directly.
    """
    arr = as_labels(labels)
    h, w = arr.shape
    if restrict is not None:
        restrict = as_mask(restrict, like=arr)
    room_ids = np.full(arr.shape, -1, dtype=np.int32)
    nodes = []
    kept = []
    for cls in AREA_CLASSES:
        comp, n = ndimage.label(arr == cls, structure=_STRUCT_4)
        for k in range(1, n + 1):
            cells_mask = comp == k
            if int(cells_mask.sum()) < min_room_area:
                continue
            if restrict is not None and not (cells_mask & restrict).any():
                continue
            cells = tuple(map(tuple, np.argwhere(cells_mask)))
            room_ids[cells_mask] = len(nodes)
            nodes.append((cls, cells))
            kept.append(cls)

    edges: set[tuple[int, int]] = set()

    def connect(room_indices: set[int]) -> None:
        for a, b in combinations(sorted(room_indices), 2):
            pair = tuple(sorted((int(kept[a]), int(kept[b]))))
            edges.add(pair)

    connector = (arr == SemClass.DOORWAY) | (arr == SemClass.ENTRANCE_DOOR)
    for r, c in np.argwhere(connector):
        adjacent = set()
        for dr, dc in NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and room_ids[nr, nc] >= 0:
                adjacent.add(int(room_ids[nr, nc]))
        connect(adjacent)

    for r in range(h):
        for c in range(w):
            a = room_ids[r, c]
            if a < 0:
                continue
            for dr, dc in ((0, 1), (1, 0)):
                nr, nc = r + dr, c + dc
                if nr < h and nc < w:
                    b = room_ids[nr, nc]
                    if b >= 0 and b != a:
                        connect({int(a), int(b)})
    return AdjacencyGraph(nodes=nodes, edges=edges)


def structural_consistency(
    pred: np.ndarray,
    gt: np.ndarray,
    explored: np.ndarray,
    min_room_area: int = DEFAULT_MIN_ROOM_AREA,
) -> float:
    """F1 between predicted and ground-truth adjacency edge sets.

    Both graphs keep only rooms with at least one unexplored cell; two
    empty edge sets agree perfectly and score 1.0.
    """
    unexplored = ~as_mask(explored, like=as_labels(gt))
    pred_edges = room_adjacency_graph(pred, restrict=unexplored, min_room_area=min_room_area).edges
    gt_edges = room_adjacency_graph(gt, restrict=unexplored, min_room_area=min_room_area).edges
    if not pred_edges and not gt_edges:
        return 1.0
    inter = len(pred_edges & gt_edges)
    precision = inter / len(pred_edges) if pred_edges else 0.0
    recall = inter / len(gt_edges) if gt_edges else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# frame-level evaluation

@dataclass
class EvalReport:
    """All metrics for one prediction against one frame."""

    pa: float
    fwiou: float
    per_class: dict[SemClass, tuple[float, float, float]]
    sc: float
    evaluated_cells: int

    ROW_FIELDS = ("pa", "fwiou", "sc", "evaluated_cells")

    def to_kv(self) -> str:
        lines = [
            f"pa={self.pa:.6f}",
            f"fwiou={self.fwiou:.6f}",
            f"sc={self.sc:.6f}",
            f"evaluated_cells={self.evaluated_cells}",
        ]
        for cls, (recall, precision, f1) in sorted(self.per_class.items()):
            name = cls.name.lower()
            lines.append(f"{name}.recall={recall:.6f}")
            lines.append(f"{name}.precision={precision:.6f}")
            lines.append(f"{name}.f1={f1:.6f}")
        return "\n".join(lines) + "\n"

    def row(self) -> str:
        return (
            f"{self.pa:.6f}\t{self.fwiou:.6f}\t{self.sc:.6f}\t{self.evaluated_cells}"
        )


def prediction_to_labels(result: PredictionResult) -> np.ndarray:
    """Per-cell argmax over the 10 channels; ties go to the lowest class id."""
    return np.asarray(result.global_probs).argmax(axis=2).astype(np.uint8)


def evaluate_frame(
    result: PredictionResult,
    gt: np.ndarray,
    explored: np.ndarray,
    relax: bool = True,
    min_room_area: int = DEFAULT_MIN_ROOM_AREA,
) -> EvalReport:
    """Score one prediction on every metric over the unexplored region."""
    pred = prediction_to_labels(result)
    gt = as_labels(gt)
    per_class = {
        cls: class_prf(pred, gt, explored, cls, relax=False)
        for cls in SemClass
    }
    return EvalReport(
        pa=pa_unexplored(pred, gt, explored, relax=relax),
        fwiou=fwiou_unexplored(pred, gt, explored, relax=relax),
        per_class=per_class,
        sc=structural_consistency(pred, gt, explored, min_room_area=min_room_area),
        evaluated_cells=int(evaluated_mask(gt, explored, relax).sum()),
    )
