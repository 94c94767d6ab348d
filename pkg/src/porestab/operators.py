"""Finite-volume assembly of the linear transport/sorption operator and of
the linearized operator ``A0 = A - M`` around a surface equilibrium.

Unknowns are stacked species-major: ``[c_1, ..., c_N, cs_1, ..., cs_N]``
with each ``c_i`` over bulk cells and each ``cs_i`` over surface cells.
Rows are in rate form (divided by cell volume or area), so the evolution
reads ``dX/dt + A X = source + reaction``.

Boundary closures:

* inflow z = 0: prescribed total outward flux ``g_in`` (zero in ``A``),
* outflow z = h: zero diffusive flux, upwind advective outflow,
* wall r = R: the Robin condition ``-d dc/dn = k_ad c_w - k_de cs`` is
  solved for the face value ``c_w`` across the half cell, which gives the
  flux ``theta (k_ad c_P - k_de cs)`` with ``theta = g/(k_ad + g)``,
  ``g = 2 d/dr``; the surface receives the same flux, so sorption is
  exactly mass conserving.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError, DomainError
from .mesh import CylinderMesh, bulk_faces, bulk_stiffness, surface_faces, surface_stiffness
from .model import SpeciesSystem, SurfaceLinearization

PROFILES = ("poiseuille", "plug")


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Axial flow ``u = w(r) e_z`` sampled at radial cell centres."""

    mesh: CylinderMesh
    w: np.ndarray
    profile: str
    w_max: float

    @property
    def has_inflow(self) -> bool:
        """Non-trivial inflow through z = 0."""
        return bool(np.any(self.w > 0.0))

    @cached_property
    def column_flux(self) -> np.ndarray:
        """Volumetric axial flux ``w * A_face`` per (i, j) column."""
        return self.w[:, None] * self.mesh.axial_face_areas

    def normal_inflow(self) -> np.ndarray:
        """``u . nu`` on the inflow faces (nu = -e_z), flattened (i, j)."""
        return -np.broadcast_to(self.w[:, None], (self.mesh.n_r, self.mesh.n_theta)).ravel()

    def normal_outflow(self) -> np.ndarray:
        return np.broadcast_to(self.w[:, None], (self.mesh.n_r, self.mesh.n_theta)).ravel()

    def divergence(self) -> np.ndarray:
        """Discrete divergence per bulk cell from the face fluxes."""
        m = self.mesh
        face = np.broadcast_to(self.column_flux[:, :, None], (m.n_r, m.n_theta, m.n_z + 1))
        net = face[:, :, 1:] - face[:, :, :-1]
        # radial and azimuthal components vanish identically
        return net.ravel() / m.cell_volumes


def build_velocity(mesh: CylinderMesh, w_max: float, profile: str = "poiseuille") -> VelocityField:
    if not (np.isfinite(w_max) and w_max >= 0.0):
        raise ConfigurationError(f"w_max must be >= 0, got {w_max!r}")
    if profile == "poiseuille":
        w = w_max * (1.0 - (mesh.r / mesh.radius) ** 2)
    elif profile == "plug":
        w = np.full(mesh.n_r, float(w_max))
    else:
        raise ConfigurationError(f"profile must be one of {PROFILES}, got {profile!r}")
    return VelocityField(mesh, w, profile, float(w_max))


def matched_inflow(sys: SpeciesSystem, equilibrium, velocity: VelocityField) -> np.ndarray:
    """Inflow data ``g_in_i = (k_de_i xi_i / k_ad_i)(u . nu)`` on z = 0.

    Returns shape ``(N, n_r * n_theta)``; with it the constant pair
    ``(psi, xi)`` is a steady state of the transport/sorption system.
    """
    _, xi = equilibrium
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (sys.n_species,):
        raise DomainError(f"xi must have shape ({sys.n_species},), got {xi.shape}")
    if np.any(xi <= 0.0):
        raise DomainError(f"xi must be componentwise > 0, species {int(np.argmin(xi))} is {xi.min()!r}")
    psi_matched = sys.k_de * xi / sys.k_ad
    return psi_matched[:, None] * velocity.normal_inflow()[None, :]


def sorption_theta(mesh: CylinderMesh, sys: SpeciesSystem) -> np.ndarray:
    """Per-species factor from eliminating the wall face value."""
    g = 2.0 * sys.d_bulk / mesh.dr
    return g / (sys.k_ad + g)


def wall_trace(mesh: CylinderMesh, sys: SpeciesSystem, c_wall, c_surf) -> np.ndarray:
    """Face value of ``c`` on r = R implied by the Robin closure.

    ``c_wall``/``c_surf`` have shape ``(N, n_surf)``.
    """
    g = (2.0 * sys.d_bulk / mesh.dr)[:, None]
    return (g * c_wall + sys.k_de[:, None] * c_surf) / (sys.k_ad[:, None] + g)


def _advection_matrix(mesh: CylinderMesh, velocity: VelocityField) -> sp.csr_matrix:
    """Upwind net outflow per cell (not divided by volume)."""
    nr, nt, nz = mesh.bulk_shape
    flux = np.repeat(velocity.column_flux.ravel(), nz)  # per cell, same along a column
    idx = np.arange(mesh.n_bulk)
    k = idx % nz
    # every cell pushes w*A*c through its top face (the last one leaves the domain)
    rows = [idx]
    cols = [idx]
    vals = [flux]
    up = k < nz - 1
    rows.append(idx[up] + 1)
    cols.append(idx[up])
    vals.append(-flux[up])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_bulk, mesh.n_bulk),
    )


def assemble_linear_part(mesh: CylinderMesh, sys: SpeciesSystem, velocity: VelocityField) -> sp.csr_matrix:
    """Operator ``A`` (transport, diffusion, sorption) with homogeneous BCs."""
    if velocity.mesh is not mesh and velocity.w.shape != (mesh.n_r,):
        raise AssemblyError("velocity field was built on a different mesh")
    n = sys.n_species
    nb, ns = mesh.n_bulk, mesh.n_surf
    kb = bulk_stiffness(mesh)
    ks = surface_stiffness(mesh)
    adv = _advection_matrix(mesh, velocity)
    theta = sorption_theta(mesh, sys)
    area = mesh.surface_areas
    wall = mesh.wall_cells
    inv_vol = sp.diags(1.0 / mesh.cell_volumes)
    inv_area = sp.diags(1.0 / area)
    surf_ids = np.arange(ns)

    blocks = [[None] * (2 * n) for _ in range(2 * n)]
    for i in range(n):
        w_ad = theta[i] * sys.k_ad[i] * area
        w_de = theta[i] * sys.k_de[i] * area
        wall_diag = sp.csr_matrix((w_ad, (wall, wall)), shape=(nb, nb))
        blocks[i][i] = inv_vol @ (sys.d_bulk[i] * kb + adv + wall_diag)
        blocks[i][n + i] = inv_vol @ sp.csr_matrix((-w_de, (wall, surf_ids)), shape=(nb, ns))
        blocks[n + i][i] = inv_area @ sp.csr_matrix((-w_ad, (surf_ids, wall)), shape=(ns, nb))
        blocks[n + i][n + i] = inv_area @ (sys.d_surf[i] * ks + sp.diags(w_de))
    return sp.bmat(blocks, format="csr")


def inflow_source(mesh: CylinderMesh, g_in) -> np.ndarray:
    """Bulk source (rate form) from the inflow data, shape ``(N, n_bulk)``."""
    g = np.atleast_2d(np.asarray(g_in, dtype=float))
    if g.shape[1] != mesh.n_r * mesh.n_theta:
        raise AssemblyError(f"g_in must have {mesh.n_r * mesh.n_theta} faces per species, got {g.shape}")
    src = np.zeros((g.shape[0], mesh.n_bulk))
    # outward flux g leaving through a face of area A adds -g*A/vol = -g/dz
    src[:, mesh.inflow_cells] = -g / mesh.dz
    return src


def reaction_block(mesh: CylinderMesh, lin: SurfaceLinearization) -> sp.csr_matrix:
    """Multiplication by ``a (x) b`` on the surface unknowns, embedded in the
    full unknown space (the bulk rows and columns are zero)."""
    n = lin.a.size
    ns = mesh.n_surf
    off = n * mesh.n_bulk
    size = off + n * ns
    b = lin.b_points
    if lin.pointwise:
        if b.shape != (ns, n):
            raise AssemblyError(f"pointwise b must have shape ({n}, {ns}), got {lin.b.shape}")
    else:
        b = np.broadcast_to(b, (ns, n))
    s = np.arange(ns)
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(n):
            v = lin.a[i] * b[:, j]
            if np.any(v != 0.0):
                rows.append(off + i * ns + s)
                cols.append(off + j * ns + s)
                vals.append(v)
    if not vals:
        return sp.csr_matrix((size, size))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    mesh: CylinderMesh
    sys: SpeciesSystem
    velocity: VelocityField
    lin: SurfaceLinearization
    linear_part: sp.csr_matrix
    reaction_part: sp.csr_matrix

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return (self.linear_part - self.reaction_part).tocsr()

    @property
    def n_species(self) -> int:
        return self.sys.n_species

    @property
    def n_unknowns(self) -> int:
        return self.n_species * (self.mesh.n_bulk + self.mesh.n_surf)

    @property
    def surface_offset(self) -> int:
        return self.n_species * self.mesh.n_bulk

    def bulk_slice(self, i: int) -> slice:
        nb = self.mesh.n_bulk
        return slice(i * nb, (i + 1) * nb)

    def surf_slice(self, i: int) -> slice:
        ns, off = self.mesh.n_surf, self.surface_offset
        return slice(off + i * ns, off + (i + 1) * ns)

    @cached_property
    def quadrature(self) -> np.ndarray:
        """Cell volume or surface area per unknown."""
        n = self.n_species
        return np.concatenate([np.tile(self.mesh.cell_volumes, n), np.tile(self.mesh.surface_areas, n)])

    @cached_property
    def energy_weights(self) -> np.ndarray:
        """Diagonal weights ``k_ad/k_de`` (bulk) and 1 (surface) per unknown."""
        nb, ns = self.mesh.n_bulk, self.mesh.n_surf
        w = self.sys.k_ad / self.sys.k_de
        return np.concatenate([np.repeat(w, nb), np.ones(self.n_species * ns)])

    @property
    def block_offsets(self) -> dict:
        return {
            "n_species": self.n_species,
            "n_bulk": self.mesh.n_bulk,
            "n_surface": self.mesh.n_surf,
            "bulk_offsets": [self.bulk_slice(i).start for i in range(self.n_species)],
            "surface_offsets": [self.surf_slice(i).start for i in range(self.n_species)],
            "n_unknowns": self.n_unknowns,
        }

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """View a flat vector as ``(bulk (N, nb), surface (N, ns))``."""
        x = np.asarray(x)
        off = self.surface_offset
        return (x[:off].reshape(self.n_species, self.mesh.n_bulk),
                x[off:].reshape(self.n_species, self.mesh.n_surf))

    def with_linearization(self, lin: SurfaceLinearization) -> "LinearizedOperator":
        return LinearizedOperator(self.mesh, self.sys, self.velocity, lin,
                                  self.linear_part, reaction_block(self.mesh, lin))


def assemble_A0(mesh: CylinderMesh, sys: SpeciesSystem, velocity: VelocityField,
                lin: SurfaceLinearization) -> LinearizedOperator:
    if lin.a.shape != (sys.n_species,):
        raise AssemblyError(f"linearization has {lin.a.size} species, system has {sys.n_species}")
    if velocity.w.shape != (mesh.n_r,):
        raise AssemblyError("velocity field does not match the mesh")
    return LinearizedOperator(mesh, sys, velocity, lin,
                              assemble_linear_part(mesh, sys, velocity),
                              reaction_block(mesh, lin))


def apply_A0(op: LinearizedOperator, state) -> np.ndarray:
    x = np.asarray(state)
    if x.shape != (op.n_unknowns,):
        raise AssemblyError(f"state must have length {op.n_unknowns}, got shape {x.shape}")
    return op.matrix @ x


@dataclass(frozen=True)
class EnergyForms:
    f_omega: complex
    f_sigma: complex
    norm_bulk: float
    norm_surf: float

    @property
    def weighted_norm(self) -> float:
        return self.norm_bulk + self.norm_surf

    @property
    def real_total(self) -> float:
        return float(np.real(self.f_omega + self.f_sigma))


def energy_forms(op: LinearizedOperator, state) -> EnergyForms:
    """Weighted forms ``(A0 x, W x)`` split into bulk and surface parts.

    ``W`` scales bulk species by ``k_ad/k_de``; for an eigenpair
    ``Re(lambda) * (norm_bulk + norm_surf) = Re(f_omega + f_sigma)``.
    """
    x = np.asarray(state, dtype=complex)
    ax = apply_A0(op, x)
    q = op.quadrature * op.energy_weights
    off = op.surface_offset
    prod = q * ax * np.conj(x)
    sq = q * np.abs(x) ** 2
    return EnergyForms(
        f_omega=complex(prod[:off].sum()),
        f_sigma=complex(prod[off:].sum()),
        norm_bulk=float(sq[:off].sum()),
        norm_surf=float(sq[off:].sum()),
    )


def dissipation_budget(op: LinearizedOperator, state) -> dict:
    """Term-by-term evaluation of ``Re(f_omega + f_sigma)``.

    Every term except ``reaction`` is a sum of squares; the advective terms
    are nonnegative when ``w >= 0``.
    """
    mesh, sys = op.mesh, op.sys
    xb, xs = op.split(np.asarray(state, dtype=complex))
    w_sp = sys.k_ad / sys.k_de
    theta = sorption_theta(mesh, sys)
    p, q, t = bulk_faces(mesh)
    ps, qs, ts = surface_faces(mesh)
    col = op.velocity.column_flux.ravel()
    nz = mesh.n_z
    terms = dict.fromkeys(
        ("bulk_gradient", "inflow_boundary", "outflow_boundary", "upwind_jumps",
         "sorption", "surface_gradient", "reaction"), 0.0)
    for i in range(sys.n_species):
        c = xb[i]
        terms["bulk_gradient"] += w_sp[i] * sys.d_bulk[i] * float(np.sum(t * np.abs(c[p] - c[q]) ** 2))
        cols = c.reshape(-1, nz)
        terms["inflow_boundary"] += w_sp[i] * 0.5 * float(np.sum(col * np.abs(cols[:, 0]) ** 2))
        terms["outflow_boundary"] += w_sp[i] * 0.5 * float(np.sum(col * np.abs(cols[:, -1]) ** 2))
        jumps = np.sum(np.abs(np.diff(cols, axis=1)) ** 2, axis=1)
        terms["upwind_jumps"] += w_sp[i] * 0.5 * float(np.sum(col * jumps))
        mix = sys.k_ad[i] / np.sqrt(sys.k_de[i]) * c[mesh.wall_cells] - np.sqrt(sys.k_de[i]) * xs[i]
        terms["sorption"] += theta[i] * float(np.sum(mesh.surface_areas * np.abs(mix) ** 2))
        terms["surface_gradient"] += sys.d_surf[i] * float(np.sum(ts * np.abs(xs[i, ps] - xs[i, qs]) ** 2))
    s = op.lin.s_sym
    s_pts = s if op.lin.pointwise else np.broadcast_to(s, (mesh.n_surf,) + s.shape)
    quad = np.einsum("ip,pij,jp->p", np.conj(xs), s_pts, xs)
    terms["reaction"] = -float(np.real(np.sum(mesh.surface_areas * quad)))
    terms["total"] = sum(terms.values())
    return terms


def export_triplets(op: LinearizedOperator, path) -> None:
    """Write ``A0`` as ``row col value`` lines (0-based)."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("# porestab-coo v1\n")
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_triplets(path) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    shape = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# shape"):
                parts = line.split()
                shape = (int(parts[2]), int(parts[3]))
            elif line.startswith("#") or not line.strip():
                continue
            else:
                r, c, v = line.split()
                rows.append(int(r))
                cols.append(int(c))
                vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)
