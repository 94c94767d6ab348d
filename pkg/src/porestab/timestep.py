"""IMEX time stepping of the nonlinear system, mass bookkeeping and decay fits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from .errors import (
    AssemblyError,
    DomainError,
    InsufficientDecayError,
    NumericalError,
    PositivityError,
    PreconditionError,
)
from .mesh import CylinderMesh
from .model import SpeciesSystem, linearize_reaction, reaction_rate
from .operators import VelocityField, assemble_linear_part, inflow_source

POSITIVITY_TOL = 1e-10
DT_SAFETY = 0.5


@dataclass
class StateField:
    """Bulk ``c`` of shape ``(N, n_bulk)``, surface ``c_surf`` of shape ``(N, n_surf)``."""

    c: np.ndarray
    c_surf: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.c_surf = np.asarray(self.c_surf, dtype=float)
        if self.c.ndim != 2 or self.c_surf.ndim != 2 or self.c.shape[0] != self.c_surf.shape[0]:
            raise DomainError(f"inconsistent state shapes {self.c.shape}, {self.c_surf.shape}")

    @property
    def n_species(self) -> int:
        return self.c.shape[0]

    @classmethod
    def constant(cls, mesh: CylinderMesh, psi, xi, time: float = 0.0) -> "StateField":
        psi = np.asarray(psi, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return cls(np.repeat(psi[:, None], mesh.n_bulk, axis=1),
                   np.repeat(xi[:, None], mesh.n_surf, axis=1), time)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.c.ravel(), self.c_surf.ravel()])

    @classmethod
    def from_vector(cls, x, n_species: int, mesh: CylinderMesh, time: float = 0.0) -> "StateField":
        x = np.asarray(x, dtype=float)
        off = n_species * mesh.n_bulk
        if x.size != off + n_species * mesh.n_surf:
            raise AssemblyError(f"vector length {x.size} does not match the mesh")
        return cls(x[:off].reshape(n_species, mesh.n_bulk).copy(),
                   x[off:].reshape(n_species, mesh.n_surf).copy(), time)

    def masses(self, mesh: CylinderMesh) -> tuple[np.ndarray, np.ndarray]:
        """Per-species bulk and surface amounts."""
        return self.c @ mesh.cell_volumes, self.c_surf @ mesh.surface_areas

    def min_value(self) -> float:
        return float(min(self.c.min(), self.c_surf.min()))


def deviation_norm(state: StateField, reference: StateField, mesh: CylinderMesh) -> float:
    """Volume/area-weighted 2-norm of ``state - reference``."""
    db = state.c - reference.c
    ds = state.c_surf - reference.c_surf
    return float(np.sqrt(np.sum(db ** 2 @ mesh.cell_volumes) + np.sum(ds ** 2 @ mesh.surface_areas)))


def reaction_jacobian_bound(sys: SpeciesSystem, c_surf) -> float:
    """``max |a||b(c)|`` over the surface points of a state."""
    return float(linearize_reaction(sys, np.maximum(c_surf, 0.0)).criterion_lhs)


def max_stable_dt(sys: SpeciesSystem, c_surf) -> float:
    bound = reaction_jacobian_bound(sys, c_surf)
    return np.inf if bound == 0.0 else DT_SAFETY / bound


@dataclass(frozen=True)
class StepFluxes:
    """Per-species rates over one step (amount per time)."""

    inflow: np.ndarray
    outflow: np.ndarray
    reaction: np.ndarray


@dataclass(frozen=True)
class LedgerRecord:
    step: int
    time: float
    delta: np.ndarray
    inflow: np.ndarray
    outflow: np.ndarray
    reaction: np.ndarray
    residual: np.ndarray
    relative: np.ndarray

    @property
    def max_relative(self) -> float:
        return float(self.relative.max())


def mass_ledger(before: StateField, after: StateField, dt: float, fluxes: StepFluxes,
                mesh: CylinderMesh, step: int = 0) -> LedgerRecord:
    """Per-species balance ``delta m = dt (inflow - outflow + reaction)``."""
    mb, ms = before.masses(mesh)
    ma, msa = after.masses(mesh)
    delta = (ma + msa) - (mb + ms)
    expected = dt * (fluxes.inflow - fluxes.outflow + fluxes.reaction)
    residual = delta - expected
    scale = np.max(np.abs(np.stack([
        mb + ms, ma + msa, dt * fluxes.inflow, dt * fluxes.outflow, dt * fluxes.reaction,
    ])), axis=0)
    relative = np.abs(residual) / np.maximum(scale, np.finfo(float).tiny)
    return LedgerRecord(step, after.time, delta, fluxes.inflow, fluxes.outflow,
                        fluxes.reaction, residual, relative)


def conserved_combinations(sys: SpeciesSystem) -> np.ndarray:
    """Orthonormal rows ``w`` with ``w . (alpha - beta) = 0``.

    ``w @ (bulk + surface masses)`` is untouched by the reaction.
    """
    a = sys.stoich
    if not np.any(a):
        return np.eye(sys.n_species)
    return sl.null_space(a[None, :]).T


class ImexStepper:
    """Backward Euler for transport/sorption, forward Euler for the reaction.

    ``(I + dt A) X_new = X + dt (s + R(X))``; the matrix is factorized once.
    """

    def __init__(self, sys: SpeciesSystem, mesh: CylinderMesh, velocity: VelocityField,
                 g_in, dt: float):
        if not (np.isfinite(dt) and dt > 0.0):
            raise PreconditionError(f"dt must be > 0, got {dt!r}")
        self.sys, self.mesh, self.velocity, self.dt = sys, mesh, velocity, float(dt)
        n = sys.n_species
        g = np.zeros((n, mesh.n_r * mesh.n_theta)) if g_in is None else np.asarray(g_in, dtype=float)
        if g.shape != (n, mesh.n_r * mesh.n_theta):
            raise AssemblyError(f"g_in must have shape {(n, mesh.n_r * mesh.n_theta)}, got {g.shape}")
        self.g_in = g
        self.linear = assemble_linear_part(mesh, sys, velocity)
        size = self.linear.shape[0]
        self.source = np.concatenate([inflow_source(mesh, g).ravel(), np.zeros(n * mesh.n_surf)])
        system = (sp.identity(size, format="csc") + self.dt * self.linear).tocsc()
        try:
            self._lu = spla.splu(system)
        except RuntimeError as exc:
            raise NumericalError("factorization of the implicit system failed",
                                 {"n": size, "dt": self.dt}) from exc
        face_area = mesh.axial_face_areas.ravel()
        self._inflow_rate = -(g * face_area[None, :]).sum(axis=1)
        self._col_flux = velocity.column_flux.ravel()

    def reaction(self, c_surf: np.ndarray) -> np.ndarray:
        # values in [-POSITIVITY_TOL, 0) pass the monitor; evaluate them as 0
        return reaction_rate(self.sys, np.maximum(c_surf, 0.0))

    def check_dt(self, state: StateField) -> None:
        limit = max_stable_dt(self.sys, state.c_surf)
        if self.dt > limit:
            raise PreconditionError(
                f"dt = {self.dt} exceeds the explicit-reaction bound {limit:.6g}"
            )

    def step(self, state: StateField, check: bool = True) -> tuple[StateField, StepFluxes]:
        if check:
            self.check_dt(state)
            _check_positive(state, state.time)
        r = self.reaction(state.c_surf)
        rhs = state.to_vector() + self.dt * self.source
        rhs[self.sys.n_species * self.mesh.n_bulk:] += self.dt * r.ravel()
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise NumericalError("linear solve produced non-finite values",
                                 {"time": state.time + self.dt})
        new = StateField.from_vector(x, self.sys.n_species, self.mesh, state.time + self.dt)
        _check_positive(new, new.time)
        top = new.c.reshape(self.sys.n_species, -1, self.mesh.n_z)[:, :, -1]
        fluxes = StepFluxes(
            inflow=self._inflow_rate.copy(),
            outflow=top @ self._col_flux,
            reaction=r @ self.mesh.surface_areas,
        )
        return new, fluxes


def _check_positive(state: StateField, time: float) -> None:
    low = state.min_value()
    if low < -POSITIVITY_TOL:
        raise PositivityError(
            f"negative concentration {low:.3e} at t = {time:.6g}",
            {"time": time, "min_value": low},
        )


def step_imex(state: StateField, dt: float, sys: SpeciesSystem, mesh: CylinderMesh,
              velocity: VelocityField, g_in) -> StateField:
    """One IMEX step (builds and factorizes the implicit system)."""
    new, _ = ImexStepper(sys, mesh, velocity, g_in, dt).step(state)
    return new


@dataclass
class Trajectory:
    times: np.ndarray
    deviations: np.ndarray
    bulk_mass: np.ndarray
    surface_mass: np.ndarray
    ledger: list = field(default_factory=list)
    final: StateField | None = None
    dt: float = 0.0

    @property
    def max_ledger_residual(self) -> float:
        return max((rec.max_relative for rec in self.ledger), default=0.0)


def simulate(sys: SpeciesSystem, mesh: CylinderMesh, velocity: VelocityField, g_in,
             state0: StateField, t_end: float, dt: float, sample_every: int = 1,
             reference: StateField | None = None, keep_ledger: bool = True) -> Trajectory:
    """Advance ``state0`` to ``t_end`` with a fixed step.

    Deviations are measured against ``reference``, usually the equilibrium
    (default: ``state0`` itself).
    """
    if not t_end > 0.0:
        raise PreconditionError(f"t_end must be > 0, got {t_end!r}")
    if sample_every < 1:
        raise PreconditionError("sample_every must be >= 1")
    reference = state0 if reference is None else reference
    stepper = ImexStepper(sys, mesh, velocity, g_in, dt)
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    state = state0
    times, devs, bulk, surf, ledger = [], [], [], [], []

    def sample(s):
        mb, ms = s.masses(mesh)
        times.append(s.time)
        devs.append(deviation_norm(s, reference, mesh))
        bulk.append(mb)
        surf.append(ms)

    sample(state)
    for n in range(1, n_steps + 1):
        try:
            new, fluxes = stepper.step(state)
        except NumericalError as exc:
            exc.diagnostics.setdefault("time", state.time)
            exc.diagnostics["step"] = n
            raise
        except PreconditionError as exc:
            raise PreconditionError(f"{exc} (step {n}, t = {state.time:.6g})") from exc
        if keep_ledger:
            ledger.append(mass_ledger(state, new, dt, fluxes, mesh, n))
        state = new
        if n % sample_every == 0 or n == n_steps:
            sample(state)
    return Trajectory(np.array(times), np.array(devs), np.array(bulk), np.array(surf),
                      ledger, state, float(dt))


@dataclass(frozen=True)
class DecayFit:
    times: np.ndarray
    deviations: np.ndarray
    tail_start: int
    fitted_rate: float
    stderr: float
    bias: float
    confidence_width: float
    corrected_rate: float
    predicted_rate: float | None

    @property
    def ratio(self) -> float | None:
        if self.predicted_rate is None or self.predicted_rate == 0.0:
            return None
        return self.corrected_rate / self.predicted_rate

    @property
    def n_tail(self) -> int:
        return self.times.size - self.tail_start


def decay_rate(times, deviations, predicted_rate: float | None = None,
               dt: float | None = None, min_samples: int = 10,
               confidence: float = 0.95) -> DecayFit:
    """Least-squares slope of ``log(deviation)`` over the tail window.

    The tail starts at the first sample that has dropped one decade below
    the initial deviation.  With ``dt`` given, the backward Euler decay
    factor ``1/(1 + rho dt)`` is inverted to ``corrected_rate`` and the size
    of that correction is added to the confidence width.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(deviations, dtype=float)
    if t.shape != d.shape or t.ndim != 1:
        raise DomainError("times and deviations must be 1-D arrays of equal length")
    if d.size == 0 or not d[0] > 0.0:
        raise InsufficientDecayError("initial deviation is zero: nothing to fit")
    below = np.flatnonzero(d <= d[0] / 10.0)
    if below.size == 0:
        raise InsufficientDecayError(
            f"deviation did not drop one decade (min ratio {d.min() / d[0]:.3g})"
        )
    start = int(below[0])
    tt, dd = t[start:], d[start:]
    if tt.size < min_samples:
        raise InsufficientDecayError(
            f"only {tt.size} tail samples after one decade of decay, need {min_samples}"
        )
    if np.any(dd <= 0.0):
        raise InsufficientDecayError("deviation reached zero inside the tail window")
    fit = stats.linregress(tt, np.log(dd))
    rate = -float(fit.slope)
    tq = stats.t.ppf(0.5 + confidence / 2.0, tt.size - 2)
    ci = float(tq * fit.stderr)
    if dt:
        # backward Euler damps by 1/(1 + rho dt) per step, i.e. log rate log(1 + rho dt)/dt
        corrected = float(np.expm1(rate * dt) / dt)
    else:
        corrected = rate
    bias = abs(corrected - rate)
    return DecayFit(t, d, start, rate, float(fit.stderr), bias, ci + bias, corrected,
                    predicted_rate)


def smooth_perturbation(mesh: CylinderMesh, n_species: int, delta: float, seed: int = 0,
                        modes: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Seeded low-frequency random fields with max-abs ``delta``.

    Bulk: polynomials in ``r/R`` up to degree 2 times Fourier modes in
    ``theta`` and cosine modes in ``z``; surface: the same angular/axial modes.
    """
    rng = np.random.default_rng(seed)
    rr = mesh.r / mesh.radius
    th, z = mesh.theta, mesh.z / mesh.height

    def angular_axial():
        f = np.zeros((mesh.n_theta, mesh.n_z))
        for m in range(modes + 1):
            for l in range(modes + 1):
                ca, sa = rng.standard_normal(2) / (1 + m + l)
                ang = ca * np.cos(m * th) + sa * np.sin(m * th)
                f += np.outer(ang, np.cos(l * np.pi * z))
        return f

    bulk = np.zeros((n_species, mesh.n_bulk))
    surf = np.zeros((n_species, mesh.n_surf))
    for i in range(n_species):
        fb = np.zeros(mesh.bulk_shape)
        for p in range(3):
            fb += (rr ** p)[:, None, None] * angular_axial()[None, :, :]
        fs = angular_axial()
        bulk[i] = fb.ravel()
        surf[i] = fs.ravel()
    scale = max(np.abs(bulk).max(), np.abs(surf).max())
    if scale == 0.0 or delta == 0.0:
        return np.zeros_like(bulk), np.zeros_like(surf)
    return delta * bulk / scale, delta * surf / scale
