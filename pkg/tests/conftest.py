import numpy as np
import pytest

from gflcoi import caseio
from gflcoi.sim import SimConfig

STD_CFG = SimConfig(0.002, 10.0)


@pytest.fixture(scope="session")
def wecc_case():
    return caseio.parse_case(caseio.bundled_case_path("wecc9_gfl")).model


@pytest.fixture(scope="session")
def wecc_system(wecc_case):
    return wecc_case.to_system()


@pytest.fixture(scope="session")
def wecc_dist(wecc_case):
    return caseio.to_disturbance(wecc_case, caseio.DisturbanceEntry(bus=9, g_pu=0.2, time_s=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
