"""SSP1 inference server: length-prefixed request/response over TCP.

One request at a time per connection; multiple connections are served
by threads sharing the model under a lock. Serving is deterministic in
eval mode: identical requests produce identical replies.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import sys
import threading

import numpy as np
import torch

from semsight_trainer.model import load_checkpoint
from semsight_trainer.ssds import NUM_CLASSES, REQUEST_LAYERS

MAGIC = b"SSP1"
VERSION = 1
MSG_REQUEST = 1
MSG_RESPONSE = 2
_REQ_HEADER = struct.Struct("<4sHBBII")
_RESP_HEADER = struct.Struct("<4sHBII")
_MAX_MESSAGE = 1 << 28


class ProtocolViolation(ValueError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def decode_request(data: bytes) -> tuple[np.ndarray, int]:
    if len(data) < _REQ_HEADER.size:
        raise ProtocolViolation("request shorter than its header")
    magic, version, msg_type, query, h, w = _REQ_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolViolation(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolViolation(f"unsupported version {version}")
    if msg_type != MSG_REQUEST:
        raise ProtocolViolation(f"unexpected message type {msg_type}")
    if query >= 7:
        raise ProtocolViolation(f"query {query} outside the room classes")
    expected = _REQ_HEADER.size + REQUEST_LAYERS * h * w
    if len(data) != expected:
        raise ProtocolViolation(f"expected {expected} bytes for {h}x{w}, got {len(data)}")
    layers = np.frombuffer(data, dtype=np.uint8, offset=_REQ_HEADER.size)
    return layers.reshape(REQUEST_LAYERS, h, w).copy(), query


def encode_response(probs: np.ndarray) -> bytes:
    c, h, w = probs.shape
    assert c == NUM_CLASSES
    header = _RESP_HEADER.pack(MAGIC, VERSION, MSG_RESPONSE, h, w)
    return header + np.ascontiguousarray(probs, dtype="<f4").tobytes(order="C")


class InferenceServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, checkpoint_path):
        self.model, self.config, _ = load_checkpoint(checkpoint_path)
        self.model_lock = threading.Lock()
        self.requests_served = 0
        self.protocol_errors = 0
        super().__init__(address, _Handler)

    def infer(self, layers: np.ndarray) -> np.ndarray:
        inputs = torch.from_numpy(layers.astype(np.float32)).unsqueeze(0)
        with self.model_lock, torch.no_grad():
            logits = self.model(inputs)
            probs = torch.sigmoid(logits)[0]
        return probs.numpy()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        while True:
            try:
                raw_len = _recv_exact(sock, 4)
            except (ConnectionError, OSError):
                return
            try:
                (length,) = struct.unpack("<I", raw_len)
                if length > _MAX_MESSAGE:
                    raise ProtocolViolation(f"message of {length} bytes too large")
                payload = _recv_exact(sock, length)
                layers, _query = decode_request(payload)
                probs = self.server.infer(layers)
                reply = encode_response(probs)
                sock.sendall(struct.pack("<I", len(reply)) + reply)
                self.server.requests_served += 1
            except ProtocolViolation as exc:
                self.server.protocol_errors += 1
                print(f"protocol violation from {self.client_address}: {exc}",
                      file=sys.stderr)
                return
            except (ConnectionError, OSError):
                return


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 9000) -> None:
    """Serve a checkpoint until interrupted."""
    with InferenceServer((host, port), checkpoint_path) as server:
        print(f"serving {checkpoint_path} on {host}:{server.server_address[1]}")
        server.serve_forever()


def serve_in_thread(checkpoint_path, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a background thread; returns (server, port)."""
    server = InferenceServer((host, port), checkpoint_path)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]
