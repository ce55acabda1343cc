import numpy as np
import pytest

from beamstat.manifold import build_grids
from beamstat.pilots import build_pilot_matrix
from beamstat.sysmodel import SystemConfig, validate


class Setup:
    def __init__(self, cfg):
        self.cfg = cfg
        self.dims = validate(cfg)
        self.grids = build_grids(cfg, self.dims)
        self.pilots = build_pilot_matrix(cfg, self.dims, self.grids)


TINY = SystemConfig(M_rz=2, M_rx=2, M_c=64, M_p=6, M_g=8, P_per_root=(3,), T=4)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def tiny():
    return Setup(TINY)


@pytest.fixture(scope="session")
def tiny2():
    return Setup(TINY.replace(Q=2, P_per_root=(3, 2)))


@pytest.fixture(scope="session")
def desk():
    return Setup(SystemConfig())


@pytest.fixture(scope="session")
def desk2():
    return Setup(SystemConfig(Q=2, P_per_root=(12, 12)))


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
