"""SSP1 server conformance: framing, shapes, ranges, determinism."""

import socket
import struct

import numpy as np
import pytest
import torch

from semsight_trainer.model import ForesightNet, ModelConfig, save_checkpoint
from semsight_trainer.server import serve_in_thread
from semsight_trainer.ssds import read_ssds


@pytest.fixture(scope="module")
def checkpoint(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    cfg = ModelConfig(width=16, depth=2, seed=0)
    torch.manual_seed(0)
    model = ForesightNet(cfg)
    model.eval()
    save_checkpoint(path, model, cfg, np.ones(10), curve=[])
    return path


@pytest.fixture(scope="module")
def live_server(checkpoint):
    server, port = serve_in_thread(checkpoint)
    yield server, port
    server.shutdown()
    server.server_close()


def test_round_trip_through_primary_client(corpus, live_server):
    """The suite's encode_request/decode_response must interoperate."""
    from semsight.dataset import read_dataset
    from semsight.predict import ExternalPredictor

    server, port = live_server
    _, sample = read_dataset(str(corpus["dataset"]))[0]
    with ExternalPredictor(f"127.0.0.1:{port}") as client:
        for query in range(7):
            result = client.predict(sample.frame, query)
            assert result.global_probs.shape == (24, 24, 10)
            assert result.global_probs.min() >= 0.0
            assert result.global_probs.max() <= 1.0
            assert (result.area_prob == result.global_probs[:, :, query]).all()
    assert server.protocol_errors == 0


def test_outputs_in_unit_range_for_random_frames(corpus, live_server):
    from semsight.dataset import read_dataset
    from semsight.predict import ExternalPredictor

    _, port = live_server
    records = read_dataset(str(corpus["dataset"]))
    rng = np.random.default_rng(0)
    with ExternalPredictor(f"127.0.0.1:{port}") as client:
        for i in rng.integers(0, len(records), size=100):
            _, sample = records[int(i)]
            result = client.predict(sample.frame, int(sample.query))
            assert result.global_probs.min() >= 0.0
            assert result.global_probs.max() <= 1.0


def test_serving_is_deterministic(corpus, live_server):
    from semsight.dataset import read_dataset
    from semsight.predict import ExternalPredictor

    _, port = live_server
    _, sample = read_dataset(str(corpus["dataset"]))[3]
    with ExternalPredictor(f"127.0.0.1:{port}") as client:
        a = client.predict(sample.frame, 2)
        b = client.predict(sample.frame, 2)
    assert (a.global_probs == b.global_probs).all()


def test_malformed_request_counted_and_connection_dropped(live_server):
    server, port = live_server
    before = server.protocol_errors
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        garbage = b"GARBAGE-NOT-SSP1"
        sock.sendall(struct.pack("<I", len(garbage)) + garbage)
        assert sock.recv(1) == b""  # server closes without replying
    assert server.protocol_errors == before + 1


def test_checkpoint_round_trip(checkpoint):
    from semsight_trainer.model import load_checkpoint

    model, cfg, curve = load_checkpoint(checkpoint)
    assert cfg.width == 16 and cfg.depth == 2
    x = torch.zeros(1, 14, 24, 24)
    with torch.no_grad():
        out = model(x)
    assert out.shape == (1, 10, 24, 24)
