"""Discrete compatibility conditions between initial data and boundary data.

The four boundary conditions are evaluated on the initial state with
one-sided differences and linearly extrapolated traces.  The resulting
residuals are first-order accurate, so they vanish to rounding for
constant fields and shrink with the mesh for smooth fields.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CylinderMesh
from .model import SpeciesSystem
from .operators import VelocityField
from .timestep import StateField

CONDITIONS = ("inflow_flux", "sorption_flux", "outflow_flux", "edge_flux")


@dataclass(frozen=True)
class CompatibilityReport:
    residuals: dict
    p: float
    advisory: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def satisfied(self, tol: float = 1e-10) -> bool:
        return self.max_residual <= tol


def check_compatibility(sys: SpeciesSystem, state0: StateField, mesh: CylinderMesh,
                        velocity: VelocityField, g_in=None, p: float = 4.0) -> CompatibilityReport:
    """Max-norm residuals of the boundary conditions at ``t = 0``.

    The conditions are only required of the initial data for ``p > 3``;
    for smaller ``p`` the report is marked advisory.
    """
    n = sys.n_species
    nr, nt, nz = mesh.bulk_shape
    c = state0.c.reshape(n, nr, nt, nz)
    cs = state0.c_surf.reshape(n, nt, nz)
    g = np.zeros((n, nr * nt)) if g_in is None else np.asarray(g_in, dtype=float)
    g = g.reshape(n, nr, nt)
    d = sys.d_bulk[:, None, None]
    ds = sys.d_surf[:, None]

    # z = 0, nu = -e_z: (u.nu) c - d dc/dnu = g_in
    trace_in = 1.5 * c[..., 0] - 0.5 * c[..., 1]
    dz_in = (c[..., 1] - c[..., 0]) / mesh.dz
    un = -velocity.w[None, :, None]
    r_in = un * trace_in + d * dz_in - g

    # r = R: -d dc/dr = k_ad c - k_de cs
    c_out, c_in = c[:, -1], c[:, -2]
    trace_w = 1.5 * c_out - 0.5 * c_in
    dr_w = (c_out - c_in) / mesh.dr
    r_sorp = -d * dr_w - (sys.k_ad[:, None, None] * trace_w - sys.k_de[:, None, None] * cs)

    # z = h: -d dc/dz = 0
    r_out = d * (c[..., -1] - c[..., -2]) / mesh.dz

    # edges of the lateral surface: -ds dcs/dz = 0 at z = 0 and z = h
    r_edge = np.concatenate([
        ds * (cs[..., 1] - cs[..., 0]) / mesh.dz,
        ds * (cs[..., -1] - cs[..., -2]) / mesh.dz,
    ], axis=-1)

    residuals = {
        name: float(np.max(np.abs(arr)))
        for name, arr in zip(CONDITIONS, (r_in, r_sorp, r_out, r_edge))
    }
    return CompatibilityReport(residuals, float(p), advisory=p <= 3.0)
