import math

import pytest

from wvnspec.potentials import PeriodicPotential, ProblemConfig, WvnTerm, free_config
from wvnspec.resonance import resonance_points


@pytest.fixture(scope="session")
def free_wvn():
    cfg = free_config(1.0, 1.0, 1.0, 0.0, 0.0)
    rp, rm = resonance_points(cfg.periodic, cfg.wvn, 0)
    return cfg, rp, rm


@pytest.fixture(scope="session")
def mathieu_q():
    return PeriodicPotential(2 * math.pi, (0.0, 2.0))


@pytest.fixture(scope="session")
def mathieu_cfg(mathieu_q):
    return ProblemConfig(mathieu_q, WvnTerm(1.0, 0.3, 0.0))
