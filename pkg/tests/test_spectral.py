import numpy as np
import pytest
import scipy.sparse as sp

from porestab.errors import DomainError, PreconditionError
from porestab.mesh import CylinderSpec, build_mesh, surface_eigenvalues_tensor
from porestab.model import SurfaceLinearization, equilibrium_chemical_balance, linearize_reaction
from porestab.operators import assemble_A0, assemble_linear_part, build_velocity, sorption_theta
from porestab.spectral import (
    INCONCLUSIVE,
    STABLE,
    UNSTABLE,
    Eigenpairs,
    _classify,
    compute_spectrum,
    conjugate_closed,
    energy_identity_check,
    energy_identity_residuals,
    instability_probe,
    stability_verdict,
)

from conftest import ab_system


def no_reaction(sys):
    return SurfaceLinearization(sys.stoich, np.zeros(sys.n_species))


def test_dissipative_part_has_nonnegative_spectrum():
    sys = ab_system(k_ad=[0.5, 2.0], k_de=[1.5, 0.7])
    mesh = build_mesh(CylinderSpec(1.0, 1.0), 8, 8, 8)
    op = assemble_A0(mesh, sys, build_velocity(mesh, 0.0), no_reaction(sys))
    pairs = compute_spectrum(op, 10)
    assert pairs.values.real.min() >= -1e-8
    assert abs(pairs.values[0]) <= 1e-8  # sorption-matched constants


def test_decoupled_surface_operator_matches_separable_values():
    sys = ab_system(k_de=[2.0, 0.5], d_surf=[0.3, 0.1])
    mesh = build_mesh(CylinderSpec(1.0, 2.0), 3, 8, 6)
    a = assemble_linear_part(mesh, sys, build_velocity(mesh, 0.0))
    off = 2 * mesh.n_bulk
    block = a[off:off + mesh.n_surf, off:off + mesh.n_surf]
    pairs = compute_spectrum(block, 12)
    theta = sorption_theta(mesh, sys)[0]
    expected = np.sort(theta * sys.k_de[0] + sys.d_surf[0] * surface_eigenvalues_tensor(mesh))[:12]
    np.testing.assert_allclose(pairs.values.real, expected, atol=1e-10)
    # and the continuum limit for the lowest nonzero mode: k_de + d_surf / R^2
    assert pairs.values[1].real == pytest.approx(theta * 2.0 + 0.3 * 1.0, rel=0.03)


def test_dense_and_sparse_paths_agree(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    dense = compute_spectrum(op, 8, method="dense")
    sparse = compute_spectrum(op, 8, method="sparse", seed=3)
    np.testing.assert_allclose(sparse.values, dense.values, atol=1e-8)
    full = np.linalg.eigvals(op.matrix.toarray())
    full = full[np.lexsort((full.imag, full.real))][:8]
    np.testing.assert_allclose(dense.values, full, atol=1e-8)
    again = compute_spectrum(op, 8, method="sparse", seed=3)
    np.testing.assert_array_equal(again.values, sparse.values)


def test_residual_invariant_and_ordering(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    pairs = compute_spectrum(op, 15)
    assert (pairs.residuals <= 1e-8).all()
    assert np.all(np.diff(pairs.values.real) >= 0)
    near = compute_spectrum(op, 5, which="around-zero")
    assert np.all(np.diff(np.abs(near.values)) >= -1e-12)
    with pytest.raises(DomainError):
        compute_spectrum(op, 0)
    with pytest.raises(DomainError):
        compute_spectrum(op, op.n_unknowns + 1)
    with pytest.raises(ValueError):
        compute_spectrum(op, 3, which="largest")


def test_conjugate_closure():
    assert conjugate_closed([1.0, 2 + 1j, 2 - 1j, 3.0])
    assert not conjugate_closed([1.0, 2 + 1j, 2 - 1.1j])
    assert not conjugate_closed([2 + 1j])
    rng = np.random.default_rng(0)
    assert conjugate_closed(np.linalg.eigvals(rng.standard_normal((30, 30))))


def test_energy_identity_for_eigenpairs(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    pairs = compute_spectrum(op, 12)
    assert energy_identity_check(op, pairs) <= 1e-6
    scaled = Eigenpairs(pairs.values, 10 * pairs.vectors, pairs.residuals, pairs.method)
    np.testing.assert_allclose(energy_identity_residuals(op, scaled),
                               energy_identity_residuals(op, pairs), atol=1e-12)


def test_energy_identity_without_reaction():
    sys = ab_system(k_ad=[0.5, 2.0], k_de=[1.5, 0.7])
    mesh = build_mesh(CylinderSpec(1.0, 1.0), 4, 6, 5)
    op = assemble_A0(mesh, sys, build_velocity(mesh, 0.0), no_reaction(sys))
    pairs = compute_spectrum(op, 10)
    assert energy_identity_check(op, pairs) <= 1e-6


def test_energy_identity_fails_for_random_states(small_problem, rng):
    sys, mesh, vel, eq, _ = small_problem
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    vecs = rng.standard_normal((op.n_unknowns, 3))
    fake = Eigenpairs(np.array([0.3, 1.0, 2.0], dtype=complex), vecs, np.zeros(3), "none")
    assert energy_identity_check(op, fake) > 1e-2


def test_stable_verdict_for_ab_balance(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    rep = stability_verdict(sys, mesh, eq, vel, k=20)
    assert rep.verdict == STABLE
    assert rep.criterion_satisfied and rep.has_inflow and not rep.anomaly
    assert rep.spectral_gap > 0
    assert rep.energy_residual <= 1e-6
    assert rep.conjugate_closed
    assert rep.probe_hits == []
    assert rep.n_computed == 20


def test_no_inflow_kernel_is_inconclusive(ab, small_mesh):
    eq = equilibrium_chemical_balance(ab)
    rep = stability_verdict(ab, small_mesh, eq, build_velocity(small_mesh, 0.0), k=5,
                            lin=no_reaction(ab))
    assert abs(rep.spectral_gap) <= 1e-8
    assert rep.verdict == INCONCLUSIVE
    assert not rep.has_inflow and not rep.anomaly
    assert any("inflow" in note for note in rep.notes)


def test_destabilized_jacobian_detected(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    lin = linearize_reaction(sys, eq[1]).scaled(-40.0)
    rep = stability_verdict(sys, mesh, eq, vel, k=20, lin=lin)
    assert lin.criterion_lhs > 10 * rep.criterion_rhs
    assert rep.verdict == UNSTABLE
    assert rep.spectral_gap < 0
    hits = rep.probe_hits
    assert hits and all(r.eigenvalue.real < 0 for r in hits)
    assert all(r.consistent for r in rep.probe)


def test_probe_flags_degenerate_slot(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    op = assemble_A0(mesh, sys, vel, linearize_reaction(sys, eq[1]))
    fake = Eigenpairs(np.array([1.0 + 0j]), np.zeros((op.n_unknowns, 1)), np.zeros(1), "none")
    (rec,) = instability_probe(op, fake)
    assert rec.degenerate and not rec.satisfied


def test_negative_equilibrium_rejected(small_problem):
    sys, mesh, vel, eq, _ = small_problem
    with pytest.raises(PreconditionError):
        stability_verdict(sys, mesh, (eq[0], np.array([1.0, -0.1])), vel)


def test_classification_rules():
    assert _classify(1.0, 1.0, True, 0.5, 1e-12) == (STABLE, False)
    assert _classify(1.1, 1.0, True, 0.5, 1e-12) == (INCONCLUSIVE, False)
    assert _classify(0.5, 1.0, False, 0.5, 1e-12) == (INCONCLUSIVE, False)
    assert _classify(0.5, 1.0, True, 0.0, 1e-12) == (INCONCLUSIVE, True)
    assert _classify(5.0, 1.0, True, -0.3, 1e-12) == (UNSTABLE, False)
    assert _classify(0.5, 1.0, True, -0.3, 1e-12) == (UNSTABLE, True)


def test_spectrum_of_generic_sparse_matrix():
    a = sp.diags([np.arange(1.0, 11.0)], [0]).tocsr()
    pairs = compute_spectrum(a, 3)
    np.testing.assert_allclose(pairs.values, [1, 2, 3])
