import pytest

from microinject.config import load_config
from microinject.equilibrium import solve_equilibrium


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def setup_v1(cfg):
    return cfg.setup(1.0, 0.0)


@pytest.fixture(scope="session")
def sol04(setup_v1):
    return solve_equilibrium(0.4, setup_v1)
