"""The independent SSDS reader must agree with the writer's package."""

import numpy as np
import pytest

import semsight.dataset as primary_ds
from semsight_trainer.ssds import (
    SsdsError,
    class_census,
    class_weights,
    read_split_manifest,
    read_ssds,
)


def test_reader_matches_primary_reader(corpus):
    ours = read_ssds(corpus["dataset"])
    theirs = primary_ds.read_dataset(str(corpus["dataset"]))
    assert len(ours) == len(theirs)
    for mine, (plan_id, sample) in zip(ours, theirs):
        assert mine.plan_id == plan_id
        assert mine.step == sample.frame.step
        assert mine.query == int(sample.query)
        assert mine.pose == tuple(sample.frame.pose)
        assert (mine.gt_labels == primary_ds.sample_gt_labels(sample)).all()
        assert (mine.explored == sample.frame.explored).all()
        assert (mine.trajectory == sample.frame.trajectory).all()
        assert (mine.obstacles == sample.frame.obstacles_seen).all()


def test_input_layers_match_wire_encoding(corpus):
    from semsight.predict import request_layers

    ours = read_ssds(corpus["dataset"])
    theirs = primary_ds.read_dataset(str(corpus["dataset"]))
    for mine, (_, sample) in list(zip(ours, theirs))[:20]:
        expected = request_layers(sample.frame).astype(np.float32)
        assert (mine.input_layers() == expected).all()


def test_supervision_layers(corpus):
    for record in read_ssds(corpus["dataset"])[:40]:
        target = record.target_mask()
        expected = (record.gt_labels == record.query) & ~record.explored
        assert (target == expected).all()
        onehot = record.gt_onehot()
        assert (onehot.argmax(axis=0) == record.gt_labels).all()


def test_corruption_detected(corpus, tmp_path):
    data = bytearray(corpus["dataset"].read_bytes())
    data[150] ^= 0xAA
    bad = tmp_path / "bad.ssds"
    bad.write_bytes(bytes(data))
    with pytest.raises(SsdsError):
        read_ssds(bad)


def test_split_manifest_agrees_with_primary(corpus):
    ours = read_split_manifest(corpus["splits"])
    theirs = primary_ds.read_split_manifest(str(corpus["splits"]))
    assert ours == theirs
    assert ours["train"] and ours["test"]


def test_class_weight_formula_parity():
    census = np.array([90, 10, 0, 0, 0, 0, 0, 0, 0, 0])
    ours = class_weights(census)
    theirs = primary_ds.compute_class_weights(census).w
    assert np.allclose(ours, theirs)
    assert ours[0] == pytest.approx(50 / 90)
    assert ours[1] == 5.0
