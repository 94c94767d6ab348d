"""Spectrum of the linearized operator, stability verdict and instability probe."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NumericalError, PreconditionError
from .mesh import CylinderMesh, poincare_constant_surface
from .model import SpeciesSystem, SurfaceLinearization, linearize_reaction
from .operators import LinearizedOperator, VelocityField, assemble_A0, energy_forms

DENSE_LIMIT = 6000
RESIDUAL_TOL = 1e-8

STABLE = "stable-by-criterion"
INCONCLUSIVE = "criterion-inconclusive"
UNSTABLE = "unstable-detected"

POINCARE_SUBSPACE = "mean-zero fields on the lateral surface (first nonzero Neumann/periodic eigenvalue)"


@dataclass(frozen=True)
class Eigenpairs:
    """Computed eigenpairs; ``vectors[:, m]`` has unit 2-norm."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str
    all_values: np.ndarray | None = None

    def __len__(self):
        return self.values.size

    def __iter__(self):
        for m in range(self.values.size):
            yield self.values[m], self.vectors[:, m]


def _as_matrix(op) -> sp.csr_matrix:
    if isinstance(op, LinearizedOperator):
        return op.matrix
    return sp.csr_matrix(op)


def eigen_residuals(matrix, values, vectors) -> np.ndarray:
    av = matrix @ vectors
    res = np.linalg.norm(av - vectors * values[None, :], axis=0)
    return res / np.linalg.norm(vectors, axis=0)


def _order(values: np.ndarray, which: str) -> np.ndarray:
    if which == "smallest-real":
        return np.lexsort((values.imag, values.real))
    if which == "around-zero":
        return np.lexsort((values.imag, np.abs(values)))
    raise ValueError(f"which must be 'smallest-real' or 'around-zero', got {which!r}")


def compute_spectrum(op, k: int, which: str = "smallest-real", method: str = "auto",
                     sigma: float | None = None, seed: int = 0) -> Eigenpairs:
    """``k`` eigenpairs of ``A0`` at the low end of the spectrum.

    ``method="dense"`` solves the full eigenproblem (default up to
    ``DENSE_LIMIT`` unknowns).  ``method="sparse"`` uses shift-invert Arnoldi
    around ``sigma`` and therefore returns the eigenvalues nearest the
    shift, which coincide with the smallest-real-part ones only when the
    low end of the spectrum is close to the real axis.
    """
    a = _as_matrix(op)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k must be in [1, {n}], got {k}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "sparse"
    all_values = None
    if method == "dense":
        try:
            vals, vecs = sl.eig(a.toarray(), check_finite=False)
        except sl.LinAlgError as exc:
            raise NumericalError("dense eigensolve failed", {"n": n}) from exc
        all_values = vals[_order(vals, which)]
        sel = _order(vals, which)[:k]
        vals, vecs = vals[sel], vecs[:, sel]
    elif method == "sparse":
        if k >= n - 1:
            raise DomainError(f"sparse path needs k < n - 1 (k={k}, n={n})")
        if sigma is None:
            # just left of the origin so a (near-)zero eigenvalue is not singular
            sigma = -1e-6 * max(1.0, float(np.abs(a.diagonal()).max()))
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            vals, vecs = spla.eigs(a.tocsc(), k=k, sigma=sigma, which="LM", v0=v0,
                                   maxiter=max(1000, 20 * n))
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(
                "shift-invert Arnoldi did not converge",
                {"n": n, "k": k, "sigma": sigma, "converged": len(exc.eigenvalues)},
            ) from exc
        sel = _order(vals, which)
        vals, vecs = vals[sel], vecs[:, sel]
    else:
        raise ValueError(f"unknown method {method!r}")
    vecs = vecs / np.linalg.norm(vecs, axis=0)[None, :]
    res = eigen_residuals(a, vals, vecs)
    bad = res > RESIDUAL_TOL
    if np.any(bad):
        raise NumericalError(
            "eigenpair residual above tolerance",
            {"method": method, "max_residual": float(res.max()),
             "n_bad": int(bad.sum()), "tolerance": RESIDUAL_TOL},
        )
    return Eigenpairs(vals, vecs, res, method, all_values)


def conjugate_closed(values, tol: float = 1e-8) -> bool:
    """Whether the complex eigenvalues pair up under conjugation."""
    values = np.asarray(values, dtype=complex)
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    cplx = values[np.abs(values.imag) > tol * scale]
    unused = list(cplx)
    while unused:
        lam = unused.pop()
        dist = [abs(mu - np.conj(lam)) for mu in unused]
        if not dist or min(dist) > tol * scale:
            return False
        unused.pop(int(np.argmin(dist)))
    return True


def energy_identity_residuals(op: LinearizedOperator, eigenpairs) -> np.ndarray:
    """Per-pair relative mismatch of ``Re(l) * |x|_W^2`` vs ``Re(F_omega + F_sigma)``.

    The denominator is floored at ``RESIDUAL_TOL * |A0|_inf * |x|_W^2``
    (a mixed absolute/relative tolerance), so that (near-)kernel vectors,
    where both sides are rounding noise, are measured on the operator scale.
    """
    a_norm = float(abs(op.matrix).sum(axis=1).max())
    out = []
    for lam, vec in eigenpairs:
        ef = energy_forms(op, vec)
        lhs = np.real(lam) * ef.weighted_norm
        rhs = ef.real_total
        floor = RESIDUAL_TOL * a_norm * ef.weighted_norm
        scale = max(abs(lhs), abs(rhs), floor, np.finfo(float).tiny)
        out.append(abs(lhs - rhs) / scale)
    return np.asarray(out)


def energy_identity_check(op: LinearizedOperator, eigenpairs) -> float:
    res = energy_identity_residuals(op, eigenpairs)
    return float(res.max()) if res.size else 0.0


@dataclass(frozen=True)
class ProbeRecord:
    index: int
    eigenvalue: complex
    lhs: float
    rhs: float
    satisfied: bool
    degenerate: bool
    consistent: bool


def instability_probe(op: LinearizedOperator, eigenpairs,
                      lin: SurfaceLinearization | None = None) -> list[ProbeRecord]:
    """Evaluate the sufficient instability condition on each eigenvector.

    ``lhs = Re int_S (b . cs) conj(a . cs)`` and ``rhs = |(A x, x)|`` with
    ``A`` the reaction-free part, both with volume/area quadrature.  If
    ``lhs > rhs`` the eigenvalue must have negative real part; a pair that
    violates this is flagged ``consistent=False``.
    """
    lin = op.lin if lin is None else lin
    q = op.quadrature
    area = op.mesh.surface_areas
    b_pts = lin.b_points
    out = []
    for m, (lam, vec) in enumerate(eigenpairs):
        vec = np.asarray(vec, dtype=complex)
        if not np.any(vec):
            out.append(ProbeRecord(m, complex(lam), 0.0, 0.0, False, True, True))
            continue
        _, xs = op.split(vec)
        a_cs = lin.a @ xs
        b_cs = np.einsum("pj,jp->p", b_pts, xs) if lin.pointwise else b_pts[0] @ xs
        lhs = float(np.real(np.sum(area * b_cs * np.conj(a_cs))))
        rhs = float(abs(np.sum(q * (op.linear_part @ vec) * np.conj(vec))))
        sat = lhs > rhs
        out.append(ProbeRecord(m, complex(lam), lhs, rhs, sat, False,
                               (not sat) or np.real(lam) < 0.0))
    return out


@dataclass
class StabilityReport:
    criterion_lhs: float
    criterion_rhs: float
    c_p: float
    mu_1: float
    eigenvalues: np.ndarray
    residuals: np.ndarray
    spectral_gap: float
    zero_tol: float
    has_inflow: bool
    verdict: str
    anomaly: bool
    energy_residual: float
    conjugate_closed: bool
    method: str
    probe: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    poincare_subspace: str = POINCARE_SUBSPACE

    @property
    def criterion_satisfied(self) -> bool:
        return self.criterion_lhs <= self.criterion_rhs

    @property
    def n_computed(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def probe_hits(self) -> list:
        return [r for r in self.probe if r.satisfied]


def _classify(lhs, rhs, has_inflow, gap, zero_tol) -> tuple[str, bool]:
    satisfied = lhs <= rhs
    if gap < -zero_tol:
        verdict = UNSTABLE
    elif satisfied and has_inflow and gap > zero_tol:
        verdict = STABLE
    else:
        verdict = INCONCLUSIVE
    anomaly = satisfied and has_inflow and gap <= zero_tol
    return verdict, anomaly


def _equilibrium_arrays(sys: SpeciesSystem, mesh: CylinderMesh, equilibrium):
    psi, xi = (np.asarray(v, dtype=float) for v in equilibrium)
    for name, v, npts in (("psi", psi, mesh.n_bulk), ("xi", xi, mesh.n_surf)):
        if v.shape not in ((sys.n_species,), (sys.n_species, npts)):
            raise PreconditionError(f"{name} has shape {v.shape}")
        if np.any(v < 0.0):
            raise PreconditionError(f"equilibrium {name} has negative components")
    return psi, xi


def stability_verdict(sys: SpeciesSystem, mesh: CylinderMesh, equilibrium,
                      velocity: VelocityField, k: int = 40,
                      lin: SurfaceLinearization | None = None,
                      method: str = "auto", seed: int = 0,
                      return_operator: bool = False):
    """Criterion, spectrum and cross-checks for one equilibrium.

    ``lin`` overrides the Jacobian evaluated at the equilibrium (used for
    deliberately destabilized what-if runs).
    """
    _, xi = _equilibrium_arrays(sys, mesh, equilibrium)
    if np.any(velocity.w < 0.0):
        raise PreconditionError("velocity must satisfy w >= 0 (inflow at z = 0)")
    if lin is None:
        lin = linearize_reaction(sys, xi)
    c_p, mu_1 = poincare_constant_surface(mesh)
    op = assemble_A0(mesh, sys, velocity, lin)
    k = min(k, op.n_unknowns)
    pairs = compute_spectrum(op, k, "smallest-real", method=method, seed=seed)
    gap = float(pairs.values.real.min())
    a_norm = float(abs(op.matrix).sum(axis=1).max())
    zero_tol = max(1e-12, 100 * np.finfo(float).eps * a_norm)
    lhs, rhs = lin.criterion_lhs, 1.0 / c_p
    verdict, anomaly = _classify(lhs, rhs, velocity.has_inflow, gap, zero_tol)
    probe = instability_probe(op, pairs, lin)
    notes = []
    if not velocity.has_inflow:
        notes.append("no inflow through z = 0: constant fields are not excluded")
    if anomaly:
        notes.append("criterion satisfied with inflow but spectral gap <= 0: discretization anomaly")
    if any(not r.consistent for r in probe):
        notes.append("instability probe: condition met by an eigenpair with Re >= 0")
    closed = conjugate_closed(pairs.all_values if pairs.all_values is not None else pairs.values)
    report = StabilityReport(
        criterion_lhs=lhs, criterion_rhs=rhs, c_p=c_p, mu_1=mu_1,
        eigenvalues=pairs.values, residuals=pairs.residuals, spectral_gap=gap,
        zero_tol=zero_tol, has_inflow=velocity.has_inflow, verdict=verdict,
        anomaly=anomaly, energy_residual=energy_identity_check(op, pairs),
        conjugate_closed=closed, method=pairs.method, probe=probe, notes=notes,
    )
    if return_operator:
        return report, op, pairs
    return report
