import numpy as np
import pytest

from momtopo.operators import build_operators
from momtopo.setups import plate_problem


@pytest.fixture(scope="session")
def small_plate():
    """24-triangle plate (3 x 2 cells) fed near its left edge."""
    return plate_problem(3, 2)


@pytest.fixture(scope="session")
def small_plate_ops(small_plate):
    p = small_plate
    return build_operators(p.mesh, p.basis, 0.8 / p.mesh.a, p.feeds)


@pytest.fixture(scope="session")
def plate_10x6():
    return plate_problem(10, 6)


@pytest.fixture(scope="session")
def plate_10x6_ops(plate_10x6):
    p = plate_10x6
    return build_operators(p.mesh, p.basis, 0.8 / p.mesh.a, p.feeds)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def plate_20x12():
    return plate_problem()


@pytest.fixture(scope="session")
def plate_20x12_ops(plate_20x12):
    p = plate_20x12
    return build_operators(p.mesh, p.basis, 0.8 / p.mesh.a, p.feeds)
