import pytest

from helmlayer import LayerSpec, PointProcessParams, sample_matern


@pytest.fixture(scope="session")
def small_layer():
    return LayerSpec(h=5.0, delta=0.05, width=20.0)


@pytest.fixture(scope="session")
def small_process():
    return PointProcessParams(kind="matern2", rho=0.3)


@pytest.fixture(scope="session")
def small_realization(small_layer, small_process):
    return sample_matern(small_process, small_layer, seed=7)


@pytest.fixture(scope="session")
def empty_realization(small_layer):
    return sample_matern(PointProcessParams(kind="matern2", rho=0.0), small_layer, seed=0)
