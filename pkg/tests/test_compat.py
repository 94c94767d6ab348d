import numpy as np
import pytest

from porestab.compat import CONDITIONS, check_compatibility
from porestab.operators import build_velocity
from porestab.timestep import StateField, smooth_perturbation


def test_matched_equilibrium_is_compatible(small_problem):
    sys, mesh, vel, eq, g = small_problem
    rep = check_compatibility(sys, StateField.constant(mesh, *eq), mesh, vel, g)
    assert set(rep.residuals) == set(CONDITIONS)
    assert rep.satisfied(1e-12)
    assert not rep.advisory


def test_missing_inflow_data_breaks_first_condition(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    rep = check_compatibility(sys, StateField.constant(mesh, *eq), mesh, vel, None)
    assert rep.residuals["inflow_flux"] > 0.1
    assert rep.residuals["sorption_flux"] <= 1e-12


def test_zero_state_is_compatible(ab, small_mesh):
    vel = build_velocity(small_mesh, 1.0)
    zero = StateField.constant(small_mesh, [0, 0], [0, 0])
    assert check_compatibility(ab, zero, small_mesh, vel, None).max_residual == 0.0


def test_advisory_for_small_p(small_problem):
    sys, mesh, vel, eq, g = small_problem
    assert check_compatibility(sys, StateField.constant(mesh, *eq), mesh, vel, g, p=3.0).advisory


def test_sorption_mismatch_detected(ab, small_mesh):
    vel = build_velocity(small_mesh, 0.0)
    state = StateField.constant(small_mesh, [1.0, 1.0], [2.0, 0.5])
    rep = check_compatibility(ab, state, small_mesh, vel, None)
    assert rep.residuals["sorption_flux"] == pytest.approx(1.0)
    assert rep.residuals["outflow_flux"] == 0.0


def test_smooth_perturbation_residuals_shrink_with_delta(small_problem):
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    out = []
    for delta in (1e-2, 1e-3):
        pb, ps = smooth_perturbation(mesh, 2, delta, seed=0)
        rep = check_compatibility(sys, StateField(ref.c + pb, ref.c_surf + ps), mesh, vel, g)
        out.append(rep.max_residual)
    assert out[1] == pytest.approx(out[0] / 10, rel=1e-6)
