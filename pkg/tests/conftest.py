import numpy as np
import pytest

from atachic.kernels import solve_direct_kernels
from atachic.model import Grid, initial_condition, example_plant, validate_config
from atachic.simulator import Backstepping, simulate
from atachic.transforms import invert_kernels


@pytest.fixture(scope="session")
def cfg():
    return validate_config(example_plant())


@pytest.fixture(scope="session")
def ks100(cfg):
    return solve_direct_kernels(cfg, 100)


@pytest.fixture(scope="session")
def ks200(cfg):
    return solve_direct_kernels(cfg, 200)


@pytest.fixture(scope="session")
def iks200(cfg, ks200):
    return invert_kernels(ks200, cfg)


@pytest.fixture(scope="session")
def closed_loop(cfg, ks200):
    """Closed-loop run from sine data, every step stored, up to t = 4."""
    grid = Grid.for_plant(cfg, 200, 0.9)
    ic = initial_condition("sine(1,1,1)", grid, cfg.n)
    return simulate(cfg, grid, ic, 4.0, Backstepping(ks200, cfg), snapshot_stride=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
