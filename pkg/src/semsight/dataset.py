"""Training-sample construction, the reference loss, and the SSDS dataset format.

Supervision is mask-constrained: ground truth is zeroed on explored
cells and the loss runs only over unexplored cells, so a learner must
infer hidden structure instead of copying its input. The weighted BCE
and multi-task combination here are the numerical reference that any
external trainer must reproduce.

SSDS files are binary, little-endian: magic ``SSDS``, version u16,
record count u32, then per record a fixed header (plan id u32, step u32,
query u8, pose row/col u16, layer count u8), four length-prefixed
SEMGRIDv1 blobs (gt labels, explored, trajectory, obstacles), and a
CRC32 over the record bytes.
"""

from __future__ import annotations

import io
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from semsight.explorer import ObservationFrame
from semsight.floorgen import Floorplan
from semsight.grids import (
    NUM_CLASSES,
    Pose,
    QUERY_CLASSES,
    SemClass,
    apply_unexplored_mask,
    as_labels,
    as_mask,
    onehot_encode,
    read_raster,
    write_raster,
)

WEIGHT_MIN, WEIGHT_MAX = 0.5, 5.0
_LOGIT_CLAMP = 30.0


class DatasetError(ValueError):
    """Base class for SSDS format violations."""


class RecordHeaderError(DatasetError):
    """Malformed file or record header."""


class ChecksumError(DatasetError):
    """Record payload does not match its CRC; names the record index."""

    def __init__(self, record_index: int, message: str = ""):
        detail = f": {message}" if message else ""
        super().__init__(f"checksum mismatch in record {record_index}{detail}")
        self.record_index = record_index


@dataclass(frozen=True)
class ClassWeights:
    """One positive weight per class, clipped to [0.5, 5.0]."""

    w: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=np.float64)
        if arr.shape != (NUM_CLASSES,):
            raise ValueError(f"expected {NUM_CLASSES} weights, got shape {arr.shape}")
        if (arr < WEIGHT_MIN - 1e-12).any() or (arr > WEIGHT_MAX + 1e-12).any():
            raise ValueError("class weights must lie in [0.5, 5.0]")
        object.__setattr__(self, "w", arr)

    @classmethod
    def uniform(cls) -> "ClassWeights":
        return cls(np.ones(NUM_CLASSES))


@dataclass(frozen=True)
class LossConfig:
    """Multi-task balance and per-class weighting.

    ``observed_only`` flips supervision onto explored cells; it exists
    only to reproduce the copy-prone baseline and is off by default.
    """

    lambda_global: float = 1.0
    lambda_area: float = 1.0
    weights: ClassWeights = field(default_factory=ClassWeights.uniform)
    observed_only: bool = False

    def __post_init__(self):
        if self.lambda_global < 0 or self.lambda_area < 0:
            raise ValueError("lambdas must be >= 0")
        if self.lambda_global == 0 and self.lambda_area == 0:
            raise ValueError("at least one lambda must be positive")


@dataclass(eq=False)
class TrainingSample:
    """One (observation, query) supervision pair.

    target_mask is 1 exactly where the ground-truth class equals the
    query and the cell is unexplored; masked_gt is the one-hot ground
    truth zeroed on explored cells; loss_weight_mask is 1 on unexplored
    cells.
    """

    frame: ObservationFrame
    masked_gt: np.ndarray
    query: SemClass
    target_mask: np.ndarray
    loss_weight_mask: np.ndarray


def build_sample(frame: ObservationFrame, plan: Floorplan, query: int) -> TrainingSample:
    """Assemble the mask-constrained supervision targets for one frame."""
    query = SemClass(query)
    if query not in QUERY_CLASSES:
        raise ValueError(f"query must be a room class in [0, 6], got {query}")
    if frame.explored.shape != plan.labels.shape:
        raise ValueError("frame does not match plan dimensions")
    unexplored = ~frame.explored
    masked_gt = apply_unexplored_mask(plan.onehot, frame.explored)
    target = (plan.labels == query) & unexplored
    return TrainingSample(
        frame=frame,
        masked_gt=masked_gt,
        query=query,
        target_mask=target,
        loss_weight_mask=unexplored,
    )


def compute_class_weights(census: Union[Mapping[int, int], Sequence[int], np.ndarray]) -> ClassWeights:
    """Derive inverse-frequency weights from a per-class cell census.

    w_c = clip(median_present_count / count_c, 0.5, 5.0); classes absent
    from the census get the upper clip.
    """
    counts = np.zeros(NUM_CLASSES, dtype=np.float64)
    if isinstance(census, Mapping):
        for cls, count in census.items():
            counts[int(cls)] = count
    else:
        arr = np.asarray(census, dtype=np.float64)
        if arr.shape != (NUM_CLASSES,):
            raise ValueError(f"census must have {NUM_CLASSES} entries")
        counts = arr
    if counts.sum() <= 0:
        raise ValueError("census is empty")
    present = counts[counts > 0]
    median = float(np.median(present))
    w = np.full(NUM_CLASSES, WEIGHT_MAX)
    nonzero = counts > 0
    w[nonzero] = np.clip(median / counts[nonzero], WEIGHT_MIN, WEIGHT_MAX)
    return ClassWeights(w)


def class_census(labels_iter: Iterable[np.ndarray]) -> np.ndarray:
    """Count cells per class across label grids."""
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for labels in labels_iter:
        counts += np.bincount(as_labels(labels).ravel(), minlength=NUM_CLASSES)
    return counts


def _prep_bce(pred_logits, target, weights):
    x = np.asarray(pred_logits, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"logit shape {x.shape} != target shape {y.shape}")
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    if isinstance(weights, ClassWeights):
        w = weights.w
    else:
        w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if w.shape != (x.shape[2],):
        raise ValueError(f"need {x.shape[2]} channel weights, got shape {w.shape}")
    return x, y, w


def masked_weighted_bce(pred_logits, target, weights, valid) -> float:
    """Class-weighted binary cross-entropy averaged over valid cells.

    loss = -(1/N) * sum_c w_c * sum_{valid cells} [y log s(x) + (1-y) log(1-s(x))]
    with N the number of valid cells. Logits are clamped to +/-30 before
    the sigmoid so the logs stay finite.
    """
    x, y, w = _prep_bce(pred_logits, target, weights)
    valid = as_mask(valid, like=x)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("valid mask selects no cells")
    x = np.clip(x[valid], -_LOGIT_CLAMP, _LOGIT_CLAMP)
    y = y[valid]
    # log s(x) = -log(1 + e^-x), log(1 - s(x)) = -log(1 + e^x)
    log_sig = -np.logaddexp(0.0, -x)
    log_one_minus = -np.logaddexp(0.0, x)
    per_channel = (y * log_sig + (1.0 - y) * log_one_minus) @ w
    return float(-per_channel.sum() / n)


def masked_weighted_bce_grad(pred_logits, target, weights, valid) -> np.ndarray:
    """Analytic gradient of :func:`masked_weighted_bce` w.r.t. the logits.

    (s(x) - y) * w_c / N on valid cells, zero elsewhere and past the
    clamp, matching the clamped forward pass exactly.
    """
    x, y, w = _prep_bce(pred_logits, target, weights)
    valid = as_mask(valid, like=x)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("valid mask selects no cells")
    sig = 1.0 / (1.0 + np.exp(-np.clip(x, -_LOGIT_CLAMP, _LOGIT_CLAMP)))
    grad = (sig - y) * w[None, None, :] / n
    grad[~valid] = 0.0
    grad[np.abs(x) > _LOGIT_CLAMP] = 0.0
    shape = np.asarray(pred_logits).shape
    return grad.reshape(shape)


class MultitaskLoss(NamedTuple):
    total: float
    global_term: float
    area_term: float


def multitask_loss(
    pred_global_logits: np.ndarray,
    pred_area_logits: np.ndarray,
    sample: TrainingSample,
    cfg: LossConfig,
) -> MultitaskLoss:
    """Combine map-completion and target-area BCE terms.

    total = lambda_global * BCE(global) + lambda_area * BCE(area), both
    restricted to unexplored cells (or to explored cells when
    ``cfg.observed_only``, against the observed semantics instead).
    """
    if cfg.observed_only:
        valid = sample.frame.explored
        global_target = sample.frame.local_semantics
        area_target = sample.frame.local_semantics[:, :, int(sample.query)]
    else:
        valid = sample.loss_weight_mask
        global_target = sample.masked_gt
        area_target = sample.target_mask
    global_term = masked_weighted_bce(pred_global_logits, global_target, cfg.weights, valid)
    area_term = masked_weighted_bce(
        pred_area_logits, area_target, float(cfg.weights.w[int(sample.query)]), valid
    )
    total = cfg.lambda_global * global_term + cfg.lambda_area * area_term
    return MultitaskLoss(total, global_term, area_term)


# ---------------------------------------------------------------------------
# SSDS on-disk format

_MAGIC = b"SSDS"
_VERSION = 1
_LAYER_COUNT = 4
_FILE_HEADER = struct.Struct("<4sHI")
_RECORD_HEADER = struct.Struct("<IIBHHB")
_U32 = struct.Struct("<I")
_MAX_BLOB = 1 << 28


def _raster_bytes(grid: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_raster(grid.astype(np.uint8), buf)
    return buf.getvalue()


def sample_gt_labels(sample: TrainingSample) -> np.ndarray:
    """Recover the full categorical ground truth behind a sample."""
    # masked_gt covers unexplored cells, local_semantics the explored ones
    full = sample.masked_gt + sample.frame.local_semantics
    return full.argmax(axis=2).astype(np.uint8)


def write_dataset(records: Sequence[tuple[int, TrainingSample]], destination) -> int:
    """Write (plan_id, sample) pairs as an SSDS file; returns record count."""
    if hasattr(destination, "write"):
        fh: BinaryIO = destination
        close = False
    else:
        fh = open(destination, "wb")
        close = True
    try:
        fh.write(_FILE_HEADER.pack(_MAGIC, _VERSION, len(records)))
        for plan_id, sample in records:
            frame = sample.frame
            body = bytearray(
                _RECORD_HEADER.pack(
                    plan_id,
                    frame.step,
                    int(sample.query),
                    frame.pose.row,
                    frame.pose.col,
                    _LAYER_COUNT,
                )
            )
            layers = (
                sample_gt_labels(sample),
                frame.explored.astype(np.uint8),
                frame.trajectory.astype(np.uint8),
                frame.obstacles_seen.astype(np.uint8),
            )
            for layer in layers:
                blob = _raster_bytes(layer)
                body += _U32.pack(len(blob))
                body += blob
            fh.write(body)
            fh.write(_U32.pack(zlib.crc32(bytes(body))))
    finally:
        if close:
            fh.close()
    return len(records)


def _read_exact(fh: BinaryIO, n: int, what: str, index: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise RecordHeaderError(f"record {index}: truncated {what}")
    return data


def read_dataset(source) -> list[tuple[int, TrainingSample]]:
    """Read an SSDS file back into (plan_id, sample) pairs.

    The reader verifies the magic, version, declared record count, and
    each record's CRC; reconstruction of the derived supervision layers
    is exact.
    """
    if hasattr(source, "read"):
        fh: BinaryIO = source
        close = False
    else:
        fh = open(source, "rb")
        close = True
    try:
        header = fh.read(_FILE_HEADER.size)
        if len(header) < _FILE_HEADER.size:
            raise RecordHeaderError("truncated file header")
        magic, version, count = _FILE_HEADER.unpack(header)
        if magic != _MAGIC:
            raise RecordHeaderError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise RecordHeaderError(f"unsupported version {version}")
        records = []
        for index in range(count):
            head = _read_exact(fh, _RECORD_HEADER.size, "record header", index)
            plan_id, step, query, pose_row, pose_col, layer_count = _RECORD_HEADER.unpack(head)
            if layer_count != _LAYER_COUNT:
                raise RecordHeaderError(
                    f"record {index}: expected {_LAYER_COUNT} layers, got {layer_count}"
                )
            body = bytearray(head)
            blobs = []
            for _ in range(layer_count):
                raw_len = _read_exact(fh, 4, "layer length", index)
                (blob_len,) = _U32.unpack(raw_len)
                if blob_len > _MAX_BLOB:
                    raise RecordHeaderError(f"record {index}: layer length {blob_len} too large")
                blob = _read_exact(fh, blob_len, "layer payload", index)
                body += raw_len
                body += blob
                blobs.append(blob)
            raw_crc = _read_exact(fh, 4, "crc", index)
            (crc,) = _U32.unpack(raw_crc)
            actual = zlib.crc32(bytes(body))
            if crc != actual:
                raise ChecksumError(index, f"stored {crc:#010x}, computed {actual:#010x}")
            gt_labels = read_raster(blobs[0])
            explored = read_raster(blobs[1]).astype(bool)
            trajectory = read_raster(blobs[2]).astype(bool)
            obstacles = read_raster(blobs[3]).astype(bool)
            frame = ObservationFrame(
                pose=Pose(pose_row, pose_col),
                trajectory=trajectory,
                explored=explored,
                obstacles_seen=obstacles,
                step=step,
                gt_onehot=onehot_encode(gt_labels),
            )
            unexplored = ~explored
            sample = TrainingSample(
                frame=frame,
                masked_gt=apply_unexplored_mask(frame.gt_onehot, explored),
                query=SemClass(query),
                target_mask=(gt_labels == query) & unexplored,
                loss_weight_mask=unexplored,
            )
            records.append((plan_id, sample))
        trailing = fh.read(1)
        if trailing:
            raise RecordHeaderError(f"trailing data after {count} records")
        return records
    finally:
        if close:
            fh.close()


def index_records(
    records: Sequence[tuple[int, TrainingSample]]
) -> dict[tuple[int, int, int], TrainingSample]:
    """Address records by (plan_id, step, query)."""
    return {
        (plan_id, sample.frame.step, int(sample.query)): sample
        for plan_id, sample in records
    }


# ---------------------------------------------------------------------------
# train/val/test split manifest

def make_split(
    plan_ids: Sequence[int],
    seed: int = 0,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> dict[str, list[int]]:
    """Partition plan ids (never frames) into train/val/test."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    import random as _random

    ids = list(plan_ids)
    _random.Random(seed).shuffle(ids)
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": sorted(ids[:n_train]),
        "val": sorted(ids[n_train:n_train + n_val]),
        "test": sorted(ids[n_train + n_val:]),
    }


def write_split_manifest(split: Mapping[str, Sequence[int]], destination) -> None:
    lines = [
        f"{name} {plan_id}"
        for name in ("train", "val", "test")
        for plan_id in split.get(name, ())
    ]
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="ascii") as fh:
            fh.write(text)


def read_split_manifest(source) -> dict[str, list[int]]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    split: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for line in text.splitlines():
        if not line.strip():
            continue
        name, _, plan_id = line.partition(" ")
        if name not in split:
            raise ValueError(f"unknown split name {name!r}")
        split[name].append(int(plan_id))
    return split
