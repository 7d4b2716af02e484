"""Predictor contract, built-in baselines, and the SSP1 wire protocol client.

A predictor maps an observation frame and a room-class query to a full
set of per-class probability maps plus the query heatmap, which for
every backend here is simply the query's channel. Baselines:

* oracle      -- returns the ground truth; upper-bounds every metric
* uniform     -- constant 0.5 everywhere
* frequency   -- copies observed semantics on explored cells and fills
                 unexplored cells with global class frequencies
* external    -- forwards to a learned model over the SSP1 protocol

SSP1 messages are little-endian and length-prefixed (u32) on the wire.
Request: magic ``SSP1``, version u16 = 1, msg type u8 = 1, query u8,
H u32, W u32, then 14 layers of H*W u8 (position, trajectory, obstacles,
explored, semantic channels 0-9). Response: magic, version, msg type
u8 = 2, H u32, W u32, then 10 layers of H*W f32 probabilities.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol

import numpy as np

from semsight.explorer import ObservationFrame
from semsight.floorgen import Floorplan
from semsight.grids import NUM_CLASSES, QUERY_CLASSES, SemClass, as_labels

MAGIC = b"SSP1"
VERSION = 1
MSG_REQUEST = 1
MSG_RESPONSE = 2
REQUEST_LAYERS = 14
_REQ_HEADER = struct.Struct("<4sHBBII")
_RESP_HEADER = struct.Struct("<4sHBII")
_MAX_MESSAGE = 1 << 28


class ProtocolError(ValueError):
    """Base class for SSP1 violations."""


class ProtocolMagicError(ProtocolError):
    """Message does not start with the SSP1 magic."""


class ProtocolVersionError(ProtocolError):
    """Unsupported protocol version."""


class ProtocolTypeError(ProtocolError):
    """Unexpected message type."""


class ProtocolShapeError(ProtocolError):
    """Declared dimensions disagree with the payload or the request."""


class TransportError(ConnectionError):
    """The stream connection failed mid-exchange."""


def _check_query(query: int) -> SemClass:
    query = SemClass(query)
    if query not in QUERY_CLASSES:
        raise ValueError(f"query must be a room class in [0, 6], got {query}")
    return query


@dataclass(eq=False)
class PredictionResult:
    """Per-class probability maps plus the selected query heatmap."""

    global_probs: np.ndarray
    area_prob: np.ndarray
    query: SemClass

    def __post_init__(self):
        probs = np.asarray(self.global_probs, dtype=np.float32)
        area = np.asarray(self.area_prob, dtype=np.float32)
        if probs.ndim != 3 or probs.shape[2] != NUM_CLASSES:
            raise ValueError(f"global_probs must be (H, W, {NUM_CLASSES})")
        if area.shape != probs.shape[:2]:
            raise ValueError("area_prob shape does not match global_probs")
        if probs.min() < 0 or probs.max() > 1 or area.min() < 0 or area.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        self.global_probs = probs
        self.area_prob = area
        self.query = _check_query(self.query)


class Predictor(Protocol):
    def predict(self, frame: ObservationFrame, query: int) -> PredictionResult: ...


def _select_channel(global_probs: np.ndarray, query: SemClass) -> PredictionResult:
    return PredictionResult(
        global_probs=global_probs,
        area_prob=global_probs[:, :, int(query)],
        query=query,
    )


class OraclePredictor:
    """Ground-truth passthrough; every metric scores perfect against it."""

    def __init__(self, plan):
        if isinstance(plan, Floorplan):
            self._onehot = plan.onehot.astype(np.float32)
        else:
            from semsight.grids import onehot_encode

            self._onehot = onehot_encode(as_labels(plan))

    def predict(self, frame: ObservationFrame, query: int) -> PredictionResult:
        return _select_channel(self._onehot, _check_query(query))


class ConstantPredictor:
    """Every channel equals a constant; 0.5 is the uniform baseline."""

    def __init__(self, value: float = 0.5):
        if not 0.0 <= value <= 1.0:
            raise ValueError("constant must lie in [0, 1]")
        self.value = float(value)

    def predict(self, frame: ObservationFrame, query: int) -> PredictionResult:
        h, w = frame.shape
        probs = np.full((h, w, NUM_CLASSES), self.value, dtype=np.float32)
        return _select_channel(probs, _check_query(query))


class FrequencyPriorPredictor:
    """Observed semantics where explored, global class frequencies elsewhere."""

    def __init__(self, frequencies: np.ndarray):
        freq = np.asarray(frequencies, dtype=np.float64)
        if freq.shape != (NUM_CLASSES,):
            raise ValueError(f"need {NUM_CLASSES} class frequencies")
        if freq.min() < 0 or freq.max() > 1:
            raise ValueError("frequencies must lie in [0, 1]")
        self.frequencies = freq.astype(np.float32)

    @classmethod
    def fit(cls, labels_iter: Iterable[np.ndarray]) -> "FrequencyPriorPredictor":
        counts = np.zeros(NUM_CLASSES, dtype=np.int64)
        for labels in labels_iter:
            counts += np.bincount(as_labels(labels).ravel(), minlength=NUM_CLASSES)
        total = counts.sum()
        if total == 0:
            raise ValueError("cannot fit on an empty census")
        return cls(counts / total)

    def predict(self, frame: ObservationFrame, query: int) -> PredictionResult:
        h, w = frame.shape
        probs = np.broadcast_to(self.frequencies, (h, w, NUM_CLASSES)).copy()
        explored = frame.explored
        probs[explored] = frame.local_semantics[explored]
        return _select_channel(probs, _check_query(query))


# ---------------------------------------------------------------------------
# SSP1 codec

def request_layers(frame: ObservationFrame) -> np.ndarray:
    """The 14 u8 input layers in wire order."""
    h, w = frame.shape
    position = np.zeros((h, w), dtype=np.uint8)
    position[frame.pose.row, frame.pose.col] = 1
    structural = [
        position,
        frame.trajectory.astype(np.uint8),
        frame.obstacles_seen.astype(np.uint8),
        frame.explored.astype(np.uint8),
    ]
    semantic = [
        (frame.local_semantics[:, :, c] > 0.5).astype(np.uint8)
        for c in range(NUM_CLASSES)
    ]
    return np.stack(structural + semantic)


def encode_request(frame: ObservationFrame, query: int) -> bytes:
    """Serialize one inference request (unframed message bytes)."""
    query = _check_query(query)
    h, w = frame.shape
    header = _REQ_HEADER.pack(MAGIC, VERSION, MSG_REQUEST, int(query), h, w)
    return header + request_layers(frame).tobytes(order="C")


def decode_request(data: bytes) -> tuple[np.ndarray, SemClass]:
    """Parse request bytes into (14, H, W) u8 layers and the query."""
    if len(data) < _REQ_HEADER.size:
        raise ProtocolMagicError("request shorter than its header")
    magic, version, msg_type, query, h, w = _REQ_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolVersionError(f"unsupported version {version}")
    if msg_type != MSG_REQUEST:
        raise ProtocolTypeError(f"expected request message, got type {msg_type}")
    expected = _REQ_HEADER.size + REQUEST_LAYERS * h * w
    if len(data) != expected:
        raise ProtocolShapeError(
            f"request for {h}x{w} must be {expected} bytes, got {len(data)}"
        )
    layers = np.frombuffer(data, dtype=np.uint8, offset=_REQ_HEADER.size)
    return layers.reshape(REQUEST_LAYERS, h, w).copy(), _check_query(query)


def encode_response(global_probs: np.ndarray) -> bytes:
    """Serialize per-class probability maps as a response message."""
    probs = np.asarray(global_probs, dtype=np.float32)
    if probs.ndim != 3 or probs.shape[2] != NUM_CLASSES:
        raise ValueError(f"global_probs must be (H, W, {NUM_CLASSES})")
    h, w = probs.shape[:2]
    header = _RESP_HEADER.pack(MAGIC, VERSION, MSG_RESPONSE, h, w)
    layers = np.ascontiguousarray(probs.transpose(2, 0, 1), dtype="<f4")
    return header + layers.tobytes(order="C")


def decode_response(
    data: bytes,
    query: int,
    expect_shape: Optional[tuple[int, int]] = None,
) -> PredictionResult:
    """Parse response bytes; validates magic, version, type, and shape."""
    if len(data) < _RESP_HEADER.size:
        raise ProtocolMagicError("response shorter than its header")
    magic, version, msg_type, h, w = _RESP_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolVersionError(f"unsupported version {version}")
    if msg_type != MSG_RESPONSE:
        raise ProtocolTypeError(f"expected response message, got type {msg_type}")
    if expect_shape is not None and (h, w) != tuple(expect_shape):
        raise ProtocolShapeError(f"reply is {h}x{w}, request was {expect_shape}")
    expected = _RESP_HEADER.size + NUM_CLASSES * h * w * 4
    if len(data) != expected:
        raise ProtocolShapeError(
            f"response for {h}x{w} must be {expected} bytes, got {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=_RESP_HEADER.size)
    probs = flat.reshape(NUM_CLASSES, h, w).transpose(1, 2, 0)
    if probs.min() < -1e-6 or probs.max() > 1 + 1e-6:
        raise ProtocolShapeError("response probabilities outside [0, 1]")
    probs = np.clip(probs, 0.0, 1.0)
    return _select_channel(probs.astype(np.float32), _check_query(query))


def send_message(sock: socket.socket, payload: bytes) -> None:
    """Write one length-prefixed message to a stream socket."""
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def recv_message(sock: socket.socket) -> bytes:
    """Read one length-prefixed message from a stream socket."""
    raw_len = _recv_exact(sock, 4)
    (length,) = struct.unpack("<I", raw_len)
    if length > _MAX_MESSAGE:
        raise ProtocolError(f"message of {length} bytes exceeds the size limit")
    return _recv_exact(sock, length)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise TransportError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


class ExternalPredictor:
    """Client for a learned model served over SSP1.

    One in-flight request per connection; the endpoint is ``host:port``
    and must be reachable at construction.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
        self.endpoint = endpoint
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot reach predictor at {endpoint}: {exc}") from exc

    def predict(self, frame: ObservationFrame, query: int) -> PredictionResult:
        request = encode_request(frame, query)
        try:
            send_message(self._sock, request)
            reply = recv_message(self._sock)
        except OSError as exc:
            raise TransportError(f"transport failure to {self.endpoint}: {exc}") from exc
        return decode_response(reply, query, expect_shape=frame.shape)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "ExternalPredictor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# backend selection

@dataclass(frozen=True)
class PredictorKind:
    """Named backend choice, with an endpoint for external predictors."""

    name: str
    endpoint: Optional[str] = None

    _KNOWN = ("oracle", "uniform", "frequency_prior", "external")

    def __post_init__(self):
        if self.name not in self._KNOWN:
            raise ValueError(f"unknown predictor kind {self.name!r}")
        if self.name == "external" and not self.endpoint:
            raise ValueError("external predictor needs an endpoint")


def make_predictor(
    kind: PredictorKind,
    plan: Optional[Floorplan] = None,
    frequencies: Optional[np.ndarray] = None,
) -> Predictor:
    """Instantiate a backend, supplying whatever context it requires."""
    if kind.name == "oracle":
        if plan is None:
            raise ValueError("oracle predictor needs the ground-truth plan")
        return OraclePredictor(plan)
    if kind.name == "uniform":
        return ConstantPredictor(0.5)
    if kind.name == "frequency_prior":
        if frequencies is None:
            raise ValueError("frequency_prior needs fitted class frequencies")
        return FrequencyPriorPredictor(frequencies)
    return ExternalPredictor(kind.endpoint)  # type: ignore[arg-type]
