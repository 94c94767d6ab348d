"""Cell-centred grids on the cylinder and its lateral surface.

Bulk cells are indexed ``(i, j, k)`` over ``(r, theta, z)`` and flattened in
C order; surface cells on ``r = R`` are indexed ``(j, k)``.  The surface
cell ``(j, k)`` is the outer face of bulk cell ``(n_r - 1, j, k)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError


@dataclass(frozen=True)
class CylinderSpec:
    radius: float
    height: float

    def __post_init__(self):
        for name in ("radius", "height"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True, eq=False)
class CylinderMesh:
    spec: CylinderSpec
    n_r: int
    n_theta: int
    n_z: int

    @property
    def radius(self) -> float:
        return self.spec.radius

    @property
    def height(self) -> float:
        return self.spec.height

    @property
    def dr(self) -> float:
        return self.radius / self.n_r

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def dz(self) -> float:
        return self.height / self.n_z

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.dr

    @cached_property
    def r_faces(self) -> np.ndarray:
        return np.arange(self.n_r + 1) * self.dr

    @cached_property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @cached_property
    def z(self) -> np.ndarray:
        return (np.arange(self.n_z) + 0.5) * self.dz

    @property
    def bulk_shape(self) -> tuple[int, int, int]:
        return (self.n_r, self.n_theta, self.n_z)

    @property
    def surface_shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_z)

    @property
    def n_bulk(self) -> int:
        return self.n_r * self.n_theta * self.n_z

    @property
    def n_surf(self) -> int:
        return self.n_theta * self.n_z

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        # exact annular-sector volumes: (r_out^2 - r_in^2)/2 * dtheta * dz
        ring = 0.5 * (self.r_faces[1:] ** 2 - self.r_faces[:-1] ** 2)
        vol = np.broadcast_to(ring[:, None, None] * self.dtheta * self.dz, self.bulk_shape)
        return vol.ravel().copy()

    @cached_property
    def surface_areas(self) -> np.ndarray:
        return np.full(self.n_surf, self.radius * self.dtheta * self.dz)

    @cached_property
    def axial_face_areas(self) -> np.ndarray:
        """Areas of the z-normal faces of one (i, j) column, shape (n_r, n_theta)."""
        ring = 0.5 * (self.r_faces[1:] ** 2 - self.r_faces[:-1] ** 2)
        return np.broadcast_to(ring[:, None] * self.dtheta, (self.n_r, self.n_theta)).copy()

    @property
    def total_volume(self) -> float:
        return float(self.cell_volumes.sum())

    @property
    def total_surface_area(self) -> float:
        return float(self.surface_areas.sum())

    def bulk_index(self, i, j, k):
        return (np.asarray(i) * self.n_theta + np.asarray(j)) * self.n_z + np.asarray(k)

    def surface_index(self, j, k):
        return np.asarray(j) * self.n_z + np.asarray(k)

    @cached_property
    def wall_cells(self) -> np.ndarray:
        """Bulk index of the wall-adjacent cell for each surface cell."""
        j, k = np.meshgrid(np.arange(self.n_theta), np.arange(self.n_z), indexing="ij")
        return self.bulk_index(self.n_r - 1, j, k).ravel()

    @cached_property
    def inflow_cells(self) -> np.ndarray:
        """Bulk indices of the cells touching z = 0, shape (n_r * n_theta,)."""
        i, j = np.meshgrid(np.arange(self.n_r), np.arange(self.n_theta), indexing="ij")
        return self.bulk_index(i, j, 0).ravel()

    @cached_property
    def outflow_cells(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.n_r), np.arange(self.n_theta), indexing="ij")
        return self.bulk_index(i, j, self.n_z - 1).ravel()

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.radius, self.height, self.bulk_shape)).encode())
        h.update(self.cell_volumes.tobytes())
        h.update(self.surface_areas.tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        vol_exact = np.pi * self.radius**2 * self.height
        area_exact = 2 * np.pi * self.radius * self.height
        return {
            "radius": self.radius,
            "height": self.height,
            "n_r": self.n_r,
            "n_theta": self.n_theta,
            "n_z": self.n_z,
            "n_bulk_cells": self.n_bulk,
            "n_surface_cells": self.n_surf,
            "volume": self.total_volume,
            "volume_rel_error": abs(self.total_volume - vol_exact) / vol_exact,
            "surface_area": self.total_surface_area,
            "surface_area_rel_error": abs(self.total_surface_area - area_exact) / area_exact,
            "checksum": self.checksum(),
        }


def build_mesh(spec: CylinderSpec, n_r: int, n_theta: int, n_z: int) -> CylinderMesh:
    for name, value, low in (("n_r", n_r, 2), ("n_theta", n_theta, 4), ("n_z", n_z, 2)):
        if int(value) != value or value < low:
            raise ConfigurationError(f"{name} must be an integer >= {low}, got {value!r}")
    return CylinderMesh(spec, int(n_r), int(n_theta), int(n_z))


def _periodic_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(n)
    return j, (j + 1) % n


def graph_laplacian(n: int, rows, cols, weights) -> sp.csr_matrix:
    """Symmetric ``sum_faces w (e_p - e_q)(e_p - e_q)^T`` for face list (p, q, w)."""
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    w = np.broadcast_to(np.asarray(weights, dtype=float), rows.shape).ravel()
    data = np.concatenate([w, w, -w, -w])
    i = np.concatenate([rows, cols, rows, cols])
    j = np.concatenate([rows, cols, cols, rows])
    return sp.csr_matrix((data, (i, j)), shape=(n, n))


def surface_faces(mesh: CylinderMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior faces ``(p, q, transmissibility)`` of the surface grid.

    Periodic in theta; the edges z = 0 and z = h carry no faces (zero flux).
    """
    nt, nz = mesh.surface_shape
    ds = mesh.radius * mesh.dtheta
    jj, jn = _periodic_pairs(nt)
    k = np.arange(nz)
    p_theta = mesh.surface_index(jj[:, None], k[None, :])
    q_theta = mesh.surface_index(jn[:, None], k[None, :])
    p_z = mesh.surface_index(np.arange(nt)[:, None], np.arange(nz - 1)[None, :])
    rows = np.concatenate([p_theta.ravel(), p_z.ravel()])
    cols = np.concatenate([q_theta.ravel(), (p_z + 1).ravel()])
    w = np.concatenate([
        np.full(p_theta.size, mesh.dz / ds),
        np.full(p_z.size, ds / mesh.dz),
    ])
    return rows, cols, w


def surface_stiffness(mesh: CylinderMesh) -> sp.csr_matrix:
    """Unit-diffusivity flux matrix on the surface grid.

    ``K @ u`` is the net outward flux of each surface cell, so the
    Laplace-Beltrami operator is ``-K / area``.
    """
    return graph_laplacian(mesh.n_surf, *surface_faces(mesh))


def surface_laplacian(mesh: CylinderMesh) -> sp.csr_matrix:
    """Discrete Laplace-Beltrami operator on the lateral surface."""
    return sp.diags(-1.0 / mesh.surface_areas) @ surface_stiffness(mesh)


def bulk_faces(mesh: CylinderMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior faces ``(p, q, transmissibility)`` between bulk cells.

    Boundary faces are omitted; the r = 0 face has zero area anyway.
    """
    nr, nt, nz = mesh.bulk_shape
    i = np.arange(nr)[:, None, None]
    j = np.arange(nt)[None, :, None]
    k = np.arange(nz)[None, None, :]

    p_r = mesh.bulk_index(np.arange(nr - 1)[:, None, None], j, k)
    w_r = mesh.r_faces[1:-1][:, None, None] * mesh.dtheta * mesh.dz / mesh.dr
    w_r = np.broadcast_to(w_r, p_r.shape)

    jj, jn = _periodic_pairs(nt)
    p_t = mesh.bulk_index(i, jj[None, :, None], k)
    q_t = mesh.bulk_index(i, jn[None, :, None], k)
    w_t = np.broadcast_to(mesh.dr * mesh.dz / (mesh.r[:, None, None] * mesh.dtheta), p_t.shape)

    p_z = mesh.bulk_index(i, j, np.arange(nz - 1)[None, None, :])
    w_z = np.broadcast_to(mesh.axial_face_areas[:, :, None] / mesh.dz, p_z.shape)

    rows = np.concatenate([p_r.ravel(), p_t.ravel(), p_z.ravel()])
    cols = np.concatenate([(p_r + nt * nz).ravel(), q_t.ravel(), (p_z + 1).ravel()])
    w = np.concatenate([w_r.ravel(), w_t.ravel(), w_z.ravel()])
    return rows, cols, w


def bulk_stiffness(mesh: CylinderMesh) -> sp.csr_matrix:
    """Unit-diffusivity flux matrix between bulk cells, zero flux on the boundary."""
    return graph_laplacian(mesh.n_bulk, *bulk_faces(mesh))


def poincare_oracle(radius: float, height: float) -> float:
    """First nonzero eigenvalue of the continuum Neumann/periodic Laplacian on
    the unrolled lateral surface: ``min(1/R^2, pi^2/h^2)``."""
    return min(1.0 / radius**2, np.pi**2 / height**2)


def poincare_constant_surface(mesh: CylinderMesh) -> tuple[float, float]:
    """``(c_p, mu_1)`` with ``mu_1`` the smallest nonzero eigenvalue of the
    discrete surface Laplacian and ``c_p = 1/sqrt(mu_1)``.

    This is the sharp constant on the mean-zero subspace.
    """
    stiff = surface_stiffness(mesh)
    area = mesh.surface_areas[0]  # uniform grid
    k_mat = (stiff / area).tocsc()
    n = mesh.n_surf
    if n <= 2500:
        vals = np.linalg.eigvalsh(k_mat.toarray())
    else:
        # shift below zero so the factorization is regular
        shift = -0.5 * poincare_oracle(mesh.radius, mesh.height)
        try:
            vals = spla.eigsh(k_mat, k=6, sigma=shift, which="LM",
                              v0=np.random.default_rng(0).standard_normal(n),
                              return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(
                "surface Laplacian eigensolve did not converge",
                {"n": n, "converged": len(exc.eigenvalues)},
            ) from exc
    vals = np.sort(vals)
    scale = max(abs(vals[-1]), 1.0)
    nonzero = vals[vals > 1e-10 * scale]
    if nonzero.size == 0:
        raise NumericalError("no nonzero eigenvalue found", {"eigenvalues": vals.tolist()})
    mu_1 = float(nonzero[0])
    return 1.0 / np.sqrt(mu_1), mu_1


def surface_eigenvalues_tensor(mesh: CylinderMesh) -> np.ndarray:
    """All discrete surface-Laplacian eigenvalues from the 1-D factors."""
    ds = mesh.radius * mesh.dtheta
    m = np.arange(mesh.n_theta)
    k = np.arange(mesh.n_z)
    lam_t = 4.0 / ds**2 * np.sin(np.pi * m / mesh.n_theta) ** 2
    lam_z = 4.0 / mesh.dz**2 * np.sin(np.pi * k / (2 * mesh.n_z)) ** 2
    return np.sort((lam_t[:, None] + lam_z[None, :]).ravel())
