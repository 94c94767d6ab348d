import numpy as np
import pytest
from hypothesis import settings

from porestab.mesh import CylinderSpec, build_mesh
from porestab.model import SpeciesSystem, equilibrium_chemical_balance
from porestab.operators import build_velocity, matched_inflow

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def ab_system(**changes):
    """A <-> B on the surface, the reference configuration of the test suite."""
    base = dict(alpha=[1, 0], beta=[0, 1], kappa_f=0.25, kappa_b=0.25,
                k_ad=1.0, k_de=1.0, d_bulk=1.0, d_surf=0.1)
    base.update(changes)
    return SpeciesSystem(**base)


@pytest.fixture
def ab():
    return ab_system()


@pytest.fixture
def small_mesh():
    return build_mesh(CylinderSpec(1.0, 1.0), 4, 6, 5)


@pytest.fixture
def small_problem(ab, small_mesh):
    vel = build_velocity(small_mesh, 1.0)
    eq = equilibrium_chemical_balance(ab)
    return ab, small_mesh, vel, eq, matched_inflow(ab, eq, vel)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
