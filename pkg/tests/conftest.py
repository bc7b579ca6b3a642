import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mocon import catalog

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

G = 9.8


@pytest.fixture(scope="session")
def pendulum():
    return catalog.build("pendulum")


@pytest.fixture(scope="session")
def bead():
    return catalog.build("bead")


@pytest.fixture(scope="session")
def double_pendulum():
    return catalog.build("double-pendulum")


@pytest.fixture(scope="session")
def identity():
    return catalog.build("identity")


@pytest.fixture(scope="session")
def all_entries():
    return [catalog.build(n) for n in catalog.names()]


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))
