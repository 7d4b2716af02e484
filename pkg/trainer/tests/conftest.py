"""Shared corpus for the trainer tests.

The corpus is produced through the simulation suite's public surfaces
(its CLI writes the SSDS file and split manifest); the trainer package
itself never imports the suite.
"""

import pathlib

import pytest

from semsight.cli import main as semsight_main


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    plans = root / "plans"
    assert semsight_main([
        "gen", "--out", str(plans), "--count", "30", "--height", "24",
        "--width", "24", "--seed", "50", "--jobs", "1",
    ]) == 0
    dataset = root / "data.ssds"
    assert semsight_main([
        "dataset", "--plans", str(plans), "--out", str(dataset),
        "--frames", "8", "--seed", "50",
    ]) == 0
    return {
        "root": root,
        "plans": plans,
        "dataset": dataset,
        "splits": dataset.with_suffix(".splits"),
    }
