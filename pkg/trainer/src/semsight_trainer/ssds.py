"""Independent SSDS v1 reader (see docs/FORMATS.md in the parent repo).

Little-endian throughout: file header ``SSDS`` + version u16 + record
count u32, then per record a fixed header, four length-prefixed
SEMGRIDv1 blobs (ground-truth labels, explored, trajectory, obstacles),
and a CRC32 over the record bytes.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

NUM_CLASSES = 10
REQUEST_LAYERS = 14

_FILE_HEADER = struct.Struct("<4sHI")
_RECORD_HEADER = struct.Struct("<IIBHHB")
_U32 = struct.Struct("<I")


class SsdsError(ValueError):
    """Malformed SSDS file."""


@dataclass
class Record:
    """One training sample: raw layers plus derived supervision targets."""

    plan_id: int
    step: int
    query: int
    pose: tuple[int, int]
    gt_labels: np.ndarray      # (H, W) uint8
    explored: np.ndarray       # (H, W) bool
    trajectory: np.ndarray     # (H, W) bool
    obstacles: np.ndarray      # (H, W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.gt_labels.shape

    def gt_onehot(self) -> np.ndarray:
        h, w = self.gt_labels.shape
        onehot = np.zeros((NUM_CLASSES, h, w), dtype=np.float32)
        rows, cols = np.indices((h, w))
        onehot[self.gt_labels, rows, cols] = 1.0
        return onehot

    def input_layers(self) -> np.ndarray:
        """The 14 model input channels in SSP1 wire order."""
        h, w = self.shape
        position = np.zeros((h, w), dtype=np.float32)
        position[self.pose] = 1.0
        observed = self.gt_onehot() * self.explored[None, :, :]
        return np.concatenate(
            [
                position[None],
                self.trajectory[None].astype(np.float32),
                self.obstacles[None].astype(np.float32),
                self.explored[None].astype(np.float32),
                observed,
            ]
        )

    def target_mask(self) -> np.ndarray:
        return (self.gt_labels == self.query) & ~self.explored


def _parse_semgrid(blob: bytes) -> np.ndarray:
    newline = blob.find(b"\n")
    if newline < 0:
        raise SsdsError("SEMGRIDv1 blob missing header line")
    parts = blob[:newline].split(b" ")
    if len(parts) != 4 or parts[0] != b"SEMGRIDv1":
        raise SsdsError(f"bad SEMGRIDv1 header {blob[:newline]!r}")
    h, w, c = (int(p) for p in parts[1:])
    if c != NUM_CLASSES:
        raise SsdsError(f"unsupported channel count {c}")
    payload = blob[newline + 1:]
    if len(payload) != h * w:
        raise SsdsError(f"payload is {len(payload)} bytes, expected {h * w}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def read_ssds(path) -> list[Record]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _FILE_HEADER.size:
        raise SsdsError("truncated file header")
    magic, version, count = _FILE_HEADER.unpack_from(data)
    if magic != b"SSDS":
        raise SsdsError(f"bad magic {magic!r}")
    if version != 1:
        raise SsdsError(f"unsupported version {version}")

    records = []
    offset = _FILE_HEADER.size
    for index in range(count):
        start = offset
        if offset + _RECORD_HEADER.size > len(data):
            raise SsdsError(f"record {index}: truncated header")
        plan_id, step, query, pose_row, pose_col, layer_count = _RECORD_HEADER.unpack_from(
            data, offset
        )
        offset += _RECORD_HEADER.size
        if layer_count != 4:
            raise SsdsError(f"record {index}: expected 4 layers, got {layer_count}")
        blobs = []
        for _ in range(layer_count):
            if offset + 4 > len(data):
                raise SsdsError(f"record {index}: truncated layer length")
            (blob_len,) = _U32.unpack_from(data, offset)
            offset += 4
            if offset + blob_len > len(data):
                raise SsdsError(f"record {index}: truncated layer payload")
            blobs.append(data[offset:offset + blob_len])
            offset += blob_len
        if offset + 4 > len(data):
            raise SsdsError(f"record {index}: missing crc")
        (crc,) = _U32.unpack_from(data, offset)
        if crc != zlib.crc32(data[start:offset]):
            raise SsdsError(f"record {index}: checksum mismatch")
        offset += 4
        records.append(
            Record(
                plan_id=plan_id,
                step=step,
                query=query,
                pose=(pose_row, pose_col),
                gt_labels=_parse_semgrid(blobs[0]),
                explored=_parse_semgrid(blobs[1]).astype(bool),
                trajectory=_parse_semgrid(blobs[2]).astype(bool),
                obstacles=_parse_semgrid(blobs[3]).astype(bool),
            )
        )
    if offset != len(data):
        raise SsdsError("trailing data after the declared records")
    return records


def read_split_manifest(path) -> dict[str, list[int]]:
    """Parse the textual ``<split> <plan_id>`` manifest next to a dataset."""
    split: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            if not line.strip():
                continue
            name, _, plan_id = line.partition(" ")
            if name not in split:
                raise SsdsError(f"unknown split name {name!r}")
            split[name].append(int(plan_id))
    return split


def class_census(records) -> np.ndarray:
    """Cell counts per class over the unique plans in ``records``."""
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    seen = set()
    for record in records:
        if record.plan_id in seen:
            continue
        seen.add(record.plan_id)
        counts += np.bincount(record.gt_labels.ravel(), minlength=NUM_CLASSES)
    return counts


def class_weights(census: np.ndarray, lo: float = 0.5, hi: float = 5.0) -> np.ndarray:
    """clip(median-present-count / count, lo, hi); absent classes get hi."""
    census = np.asarray(census, dtype=np.float64)
    present = census[census > 0]
    if present.size == 0:
        raise SsdsError("empty census")
    median = float(np.median(present))
    w = np.full(NUM_CLASSES, hi)
    nonzero = census > 0
    w[nonzero] = np.clip(median / census[nonzero], lo, hi)
    return w
