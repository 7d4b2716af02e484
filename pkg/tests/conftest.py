import pytest

from semsight.fixtures import tiny_three_room, tiny_two_room
from semsight.floorgen import FloorplanSpec, generate_floorplan


@pytest.fixture(scope="session")
def tiny():
    return tiny_two_room()


@pytest.fixture(scope="session")
def tiny3():
    return tiny_three_room()


@pytest.fixture(scope="session")
def small_plans():
    """Twenty deterministic 24x24 plans shared across test modules."""
    return [
        generate_floorplan(FloorplanSpec(height=24, width=24, seed=1000 + i))
        for i in range(20)
    ]
