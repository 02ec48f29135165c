import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bdflab.dressing import dress
from bdflab.galerkin import multiplet_basis, para_basis, vacuum_basis
from bdflab.nonrel import pekar_minimize
from bdflab.radial import RadialMesh

settings.register_profile(
    "bdflab",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("bdflab")


@pytest.fixture(scope="session")
def free_vacuum():
    return dress(0.0, 100.0)


@pytest.fixture(scope="session")
def dressed():
    return dress(0.02, 100.0)


@pytest.fixture(scope="session")
def mesh600():
    return RadialMesh.log()


@pytest.fixture(scope="session")
def pekar():
    return pekar_minimize(RadialMesh.log(1e-4, 60.0, 800))


@pytest.fixture(scope="session")
def small_para(dressed):
    return para_basis(dressed, n_rad=10)


@pytest.fixture(scope="session")
def small_multiplet(dressed):
    return multiplet_basis(dressed, two_j=1, n_rad=8, s_min=0.5, s_max=8.0)


@pytest.fixture(scope="session")
def small_vacuum(dressed):
    return vacuum_basis(dressed, n_rad=12)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
