import numpy as np
import pytest
from hypothesis import given, strategies as st

from porestab.errors import InsufficientDecayError, PositivityError, PreconditionError
from porestab.mesh import CylinderSpec, build_mesh
from porestab.model import SpeciesSystem, equilibrium_chemical_balance, linearize_reaction
from porestab.operators import apply_A0, assemble_A0, build_velocity, matched_inflow
from porestab.timestep import (
    ImexStepper,
    StateField,
    conserved_combinations,
    decay_rate,
    deviation_norm,
    mass_ledger,
    max_stable_dt,
    simulate,
    smooth_perturbation,
    step_imex,
)

from conftest import ab_system


def random_state(mesh, n, rng, low=0.5, high=1.5):
    return StateField(rng.uniform(low, high, (n, mesh.n_bulk)),
                      rng.uniform(low, high, (n, mesh.n_surf)))


def test_state_vector_round_trip(small_mesh, rng):
    s = random_state(small_mesh, 2, rng)
    back = StateField.from_vector(s.to_vector(), 2, small_mesh, 1.5)
    np.testing.assert_array_equal(back.c, s.c)
    np.testing.assert_array_equal(back.c_surf, s.c_surf)
    assert back.time == 1.5


def test_equilibrium_is_fixed_point(small_problem):
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    state = ref
    stepper = ImexStepper(sys, mesh, vel, g, 0.1)
    for _ in range(50):
        new, fluxes = stepper.step(state)
        assert np.abs(new.to_vector() - state.to_vector()).max() <= 1e-10
        assert mass_ledger(state, new, 0.1, fluxes, mesh).max_relative <= 1e-10
        state = new
    single = step_imex(ref, 0.1, sys, mesh, vel, g)
    np.testing.assert_allclose(single.to_vector(), ref.to_vector(), atol=1e-10)


def test_closed_system_without_reaction_conserves_mass(small_mesh, rng):
    sys = SpeciesSystem([1, 0], [1, 0], 1.0, 1.0, [0.5, 2.0], [1.0, 0.3], 1.0, 0.2)
    vel = build_velocity(small_mesh, 0.0)
    state = random_state(small_mesh, 2, rng)
    stepper = ImexStepper(sys, small_mesh, vel, None, 0.05)
    for _ in range(20):
        new, _ = stepper.step(state)
        before = sum(state.masses(small_mesh))
        after = sum(new.masses(small_mesh))
        np.testing.assert_allclose(after, before, rtol=1e-10)
        state = new


def test_closed_reactive_system_ledger(small_mesh, rng):
    sys = SpeciesSystem([2, 0, 1], [0, 1, 0], 0.7, 0.4, [1.0, 0.5, 2.0], [1.0, 1.5, 0.5],
                        [1.0, 0.5, 0.8], [0.1, 0.2, 0.05])
    vel = build_velocity(small_mesh, 0.0)
    state = random_state(small_mesh, 3, rng)
    stepper = ImexStepper(sys, small_mesh, vel, None, 0.02)
    w = conserved_combinations(sys)
    np.testing.assert_allclose(w @ sys.stoich, 0.0, atol=1e-14)
    for n in range(20):
        new, fluxes = stepper.step(state)
        rec = mass_ledger(state, new, 0.02, fluxes, small_mesh, n)
        assert rec.max_relative <= 1e-9
        np.testing.assert_allclose(rec.delta, 0.02 * fluxes.reaction, rtol=1e-9, atol=1e-14)
        # reactive changes are proportional to the stoichiometry
        extent = rec.delta / sys.stoich
        np.testing.assert_allclose(extent, extent[0], rtol=1e-9)
        tot_b = sum(state.masses(small_mesh))
        tot_a = sum(new.masses(small_mesh))
        np.testing.assert_allclose(w @ tot_a, w @ tot_b, atol=1e-10 * np.abs(tot_b).max())
        state = new


def test_inflow_only_mass_growth(small_mesh):
    sys = SpeciesSystem([1, 0], [1, 0], 1.0, 1.0, 1.0, 1.0, 1.0, 0.1)
    vel = build_velocity(small_mesh, 0.0)
    faces = small_mesh.n_r * small_mesh.n_theta
    g = -np.vstack([np.linspace(0.1, 1.0, faces), np.full(faces, 0.3)])
    state = StateField.constant(small_mesh, [0.2, 0.2], [0.2, 0.2])
    stepper = ImexStepper(sys, small_mesh, vel, g, 0.1)
    expected = -(g * small_mesh.axial_face_areas.ravel()).sum(axis=1) * 0.1
    for _ in range(5):
        new, fluxes = stepper.step(state)
        grown = sum(new.masses(small_mesh)) - sum(state.masses(small_mesh))
        np.testing.assert_allclose(grown, expected, rtol=1e-9)
        state = new


def test_flow_through_ledger(small_problem):
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    pb, ps = smooth_perturbation(mesh, 2, 0.05, seed=2)
    tr = simulate(sys, mesh, vel, g, StateField(ref.c + pb, ref.c_surf + ps), 2.0, 0.05, reference=ref)
    assert tr.max_ledger_residual <= 1e-9
    assert len(tr.ledger) == 40
    assert np.all(tr.times[1:] > tr.times[:-1])


def test_dt_above_reaction_bound_rejected(small_mesh):
    sys = ab_system(kappa_f=50.0, kappa_b=50.0)
    eq = equilibrium_chemical_balance(sys)
    vel = build_velocity(small_mesh, 1.0)
    state = StateField.constant(small_mesh, *eq)
    limit = max_stable_dt(sys, state.c_surf)
    assert limit == pytest.approx(0.5 / linearize_reaction(sys, eq[1]).criterion_lhs)
    with pytest.raises(PreconditionError, match="explicit-reaction bound"):
        step_imex(state, 2 * limit, sys, small_mesh, vel, matched_inflow(sys, eq, vel))
    with pytest.raises(PreconditionError):
        step_imex(state, -1.0, sys, small_mesh, vel, None)


def test_negative_state_aborts(small_problem):
    sys, mesh, vel, eq, g = small_problem
    state = StateField.constant(mesh, *eq)
    state.c[0, 3] = -1e-6
    with pytest.raises(PositivityError) as info:
        step_imex(state, 0.1, sys, mesh, vel, g)
    assert info.value.diagnostics["min_value"] == pytest.approx(-1e-6)


def test_zero_perturbation_gives_flat_deviation(small_problem):
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    pb, ps = smooth_perturbation(mesh, 2, 0.0)
    assert not pb.any() and not ps.any()
    tr = simulate(sys, mesh, vel, g, ref, 1.0, 0.1, reference=ref)
    assert tr.deviations.max() <= 1e-10
    with pytest.raises(InsufficientDecayError):
        decay_rate(tr.times, tr.deviations)


def test_simulate_preconditions(small_problem):
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    with pytest.raises(PreconditionError):
        simulate(sys, mesh, vel, g, ref, 0.0, 0.1)
    with pytest.raises(PreconditionError):
        simulate(sys, mesh, vel, g, ref, 1.0, 0.1, sample_every=0)


def test_perturbation_is_seeded_and_scaled(small_mesh):
    a = smooth_perturbation(small_mesh, 2, 1e-3, seed=5)
    b = smooth_perturbation(small_mesh, 2, 1e-3, seed=5)
    c = smooth_perturbation(small_mesh, 2, 1e-3, seed=6)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])
    assert max(np.abs(a[0]).max(), np.abs(a[1]).max()) == pytest.approx(1e-3)


def test_decay_fit_exact_exponential():
    t = np.linspace(0, 5, 200)
    fit = decay_rate(t, np.exp(-2 * t), predicted_rate=2.0)
    assert fit.fitted_rate == pytest.approx(2.0, abs=1e-6)
    assert fit.ratio == pytest.approx(1.0, abs=1e-6)


def test_decay_fit_tail_dominance():
    t = np.linspace(0, 8, 400)
    fit = decay_rate(t, np.exp(-2 * t) * (1 + 0.1 * np.exp(-5 * t)))
    assert fit.fitted_rate == pytest.approx(2.0, rel=0.01)
    assert fit.times[fit.tail_start] > 0


def test_decay_fit_requires_a_decade_and_ten_samples():
    t = np.linspace(0, 1, 50)
    with pytest.raises(InsufficientDecayError, match="decade"):
        decay_rate(t, np.exp(-0.5 * t))
    t = np.linspace(0, 5, 12)
    with pytest.raises(InsufficientDecayError, match="tail samples"):
        decay_rate(t, np.exp(-2 * t))


@given(st.floats(0.05, 5.0), st.floats(0.001, 0.2))
def test_backward_euler_correction_inverts_damping(rho, dt):
    t = np.arange(0, 400) * dt
    dev = (1.0 + rho * dt) ** (-np.arange(400.0))
    if dev[-1] > 1e-2:
        return
    fit = decay_rate(t, dev, dt=dt)
    assert fit.corrected_rate == pytest.approx(rho, rel=1e-9)
    assert fit.confidence_width >= fit.bias


def test_linear_regime_agrees_with_A0(small_problem):
    """One step from a tiny perturbation: (x1 - x0)/dt ~ -A0 (x0 - eq)."""
    sys, mesh, vel, eq, g = small_problem
    ref = StateField.constant(mesh, *eq)
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    delta = 1e-5
    pb, ps = smooth_perturbation(mesh, 2, delta, seed=4)
    x0 = StateField(ref.c + pb, ref.c_surf + ps)
    dev = x0.to_vector() - ref.to_vector()
    # dt * |A0| <= 0.2 keeps the ladder in the asymptotic first-order regime
    dts = [5e-4, 2.5e-4, 1.25e-4, 6.25e-5]
    errs = []
    for dt in dts:
        x1 = step_imex(x0, dt, sys, mesh, vel, g)
        errs.append(np.linalg.norm((x1.to_vector() - x0.to_vector()) / dt + apply_A0(op, dev)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2)), ratios


def test_deviation_norm_weights(small_mesh):
    ref = StateField.constant(small_mesh, [0, 0], [0, 0])
    one = StateField.constant(small_mesh, [1, 0], [0, 0])
    assert deviation_norm(one, ref, small_mesh) == pytest.approx(np.sqrt(small_mesh.total_volume))
