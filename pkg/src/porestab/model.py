"""Species data, surface chemistry and its linearization.

Concentration arguments are arrays whose leading axis runs over species, so
a single state is shape ``(N,)`` and a field on the surface grid is shape
``(N, n_points)``.  All functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    SingularLinearizationError,
    UnsupportedConstructionError,
)


def _vector(name: str, values, n: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector, got shape {arr.shape}")
    if n is not None and arr.size != n:
        raise ConfigurationError(f"{name} must have length {n}, got {arr.size}")
    return arr


def _check_stoichiometry(name: str, coeffs: np.ndarray) -> None:
    bad = (coeffs != 0.0) & ~(coeffs >= 1.0)
    if np.any(bad) or not np.all(np.isfinite(coeffs)):
        i = int(np.flatnonzero(bad | ~np.isfinite(coeffs))[0])
        raise ConfigurationError(
            f"{name}[{i}] = {coeffs[i]!r} is not in {{0}} U [1, inf)"
        )
    if np.all(coeffs == 0.0):
        raise ConfigurationError(f"{name} must not be the zero vector")


@dataclass(frozen=True)
class SpeciesSystem:
    """N species with one reversible surface reaction and linear sorption.

    ``alpha`` are the educt and ``beta`` the product stoichiometric
    coefficients.  Rate constants and diffusivities must be strictly
    positive.
    """

    alpha: np.ndarray
    beta: np.ndarray
    kappa_f: float
    kappa_b: float
    k_ad: np.ndarray
    k_de: np.ndarray
    d_bulk: np.ndarray
    d_surf: np.ndarray
    alpha_ne_beta: bool = field(init=False)

    def __post_init__(self):
        alpha = _vector("alpha", self.alpha)
        n = alpha.size
        if n < 1:
            raise ConfigurationError("at least one species is required")
        beta = _vector("beta", self.beta, n)
        _check_stoichiometry("alpha", alpha)
        _check_stoichiometry("beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        for name in ("kappa_f", "kappa_b"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0.0):
                raise ConfigurationError(f"{name} must be > 0, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("k_ad", "k_de", "d_bulk", "d_surf"):
            arr = np.broadcast_to(_vector(name, getattr(self, name)), (n,)).copy()
            if not np.all(np.isfinite(arr) & (arr > 0.0)):
                i = int(np.flatnonzero(~(np.isfinite(arr) & (arr > 0.0)))[0])
                raise ConfigurationError(f"{name}[{i}] must be > 0, got {arr[i]!r}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        alpha.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "alpha_ne_beta", bool(np.any(alpha != beta)))

    @property
    def n_species(self) -> int:
        return self.alpha.size

    @property
    def stoich(self) -> np.ndarray:
        """Net stoichiometric vector ``alpha - beta``."""
        return self.alpha - self.beta

    @property
    def order_forward(self) -> float:
        return float(self.alpha.sum())

    @property
    def order_backward(self) -> float:
        return float(self.beta.sum())

    def replace(self, **changes) -> "SpeciesSystem":
        kwargs = dict(
            alpha=self.alpha, beta=self.beta, kappa_f=self.kappa_f,
            kappa_b=self.kappa_b, k_ad=self.k_ad, k_de=self.k_de,
            d_bulk=self.d_bulk, d_surf=self.d_surf,
        )
        kwargs.update(changes)
        return SpeciesSystem(**kwargs)


def _species_first(sys: SpeciesSystem, c, name: str) -> np.ndarray:
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 0 or arr.shape[0] != sys.n_species:
        raise DomainError(
            f"{name} must have leading dimension {sys.n_species}, got shape {arr.shape}"
        )
    return arr


def _require_nonnegative(c: np.ndarray, name: str) -> None:
    neg = c < 0.0
    if np.any(neg):
        idx = np.argwhere(neg)[0]
        raise DomainError(
            f"{name} has a negative concentration for species {int(idx[0])}: "
            f"{c[tuple(idx)]!r}"
        )


def monomial(c: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """``prod_k c_k**exponents_k`` over the leading axis, with 0**0 = 1.

    Raises :class:`SingularLinearizationError` if a zero concentration is
    raised to a negative power.
    """
    c = np.asarray(c, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    shape = (-1,) + (1,) * (c.ndim - 1)
    e = exponents.reshape(shape)
    singular = (c == 0.0) & (e < 0.0)
    if np.any(singular):
        k = int(np.argwhere(singular)[0][0])
        raise SingularLinearizationError(
            f"species {k}: zero concentration raised to negative power {exponents[k]}"
        )
    with np.errstate(divide="ignore"):
        return np.prod(np.power(c, e), axis=0)


def reaction_rate(sys: SpeciesSystem, c_surf) -> np.ndarray:
    """Mass-action rate ``(alpha_i - beta_i)(kappa_b c^beta - kappa_f c^alpha)``."""
    c = _species_first(sys, c_surf, "c_surf")
    _require_nonnegative(c, "c_surf")
    net = sys.kappa_b * monomial(c, sys.beta) - sys.kappa_f * monomial(c, sys.alpha)
    a = sys.stoich.reshape((-1,) + (1,) * (c.ndim - 1))
    return a * net


def sorption_rate(sys: SpeciesSystem, c_bulk_trace, c_surf) -> np.ndarray:
    """Linear sorption ``k_ad c - k_de c_surf`` (net adsorption flux)."""
    cb = _species_first(sys, c_bulk_trace, "c_bulk_trace")
    cs = _species_first(sys, c_surf, "c_surf")
    if cb.shape != cs.shape:
        raise DomainError(f"shape mismatch: {cb.shape} vs {cs.shape}")
    shape = (-1,) + (1,) * (cb.ndim - 1)
    return sys.k_ad.reshape(shape) * cb - sys.k_de.reshape(shape) * cs


def balance_level(sys: SpeciesSystem) -> float:
    """Common surface level gamma of the equal-components chemical balance."""
    diff = sys.order_forward - sys.order_backward
    if diff == 0.0:
        # kappa_b g^s = kappa_f g^s holds for every g (or r vanishes identically)
        if sys.kappa_f == sys.kappa_b or not sys.alpha_ne_beta:
            return 1.0
        raise UnsupportedConstructionError(
            "|alpha| == |beta| with kappa_f != kappa_b: no equal-components "
            "chemical balance exists"
        )
    return float((sys.kappa_b / sys.kappa_f) ** (1.0 / diff))


def equilibrium_chemical_balance(sys: SpeciesSystem) -> tuple[np.ndarray, np.ndarray]:
    """Constant equilibrium ``(psi, xi)`` with all surface values equal.

    ``xi_i = gamma`` for every species and ``psi_i = (k_de_i/k_ad_i) xi_i``,
    so both the reaction and the sorption rates vanish.
    """
    gamma = balance_level(sys)
    xi = np.full(sys.n_species, gamma)
    psi = sys.k_de / sys.k_ad * xi
    return psi, xi


@dataclass(frozen=True)
class SurfaceLinearization:
    """Jacobian ``a (x) b`` of the reaction rate at a surface state.

    ``b`` has shape ``(N,)`` for a constant state or ``(N, P)`` for a field
    over P surface points; ``m_tilde`` and ``s_sym`` are then ``(N, N)`` or
    ``(P, N, N)``.
    """

    a: np.ndarray
    b: np.ndarray

    @property
    def pointwise(self) -> bool:
        return self.b.ndim == 2

    @property
    def b_points(self) -> np.ndarray:
        """``b`` as shape ``(P, N)`` (P = 1 for a constant state)."""
        return self.b.T if self.pointwise else self.b[None, :]

    @property
    def m_tilde(self) -> np.ndarray:
        m = np.einsum("i,pj->pij", self.a, self.b_points)
        return m if self.pointwise else m[0]

    @property
    def s_sym(self) -> np.ndarray:
        m = self.m_tilde
        return 0.5 * (m + np.swapaxes(m, -1, -2))

    @property
    def ab_norm(self) -> np.ndarray:
        """``|a||b|`` per point."""
        return np.linalg.norm(self.a) * np.linalg.norm(self.b_points, axis=1)

    @property
    def criterion_lhs(self) -> float:
        return float(np.max(self.ab_norm))

    def scaled(self, factor: float) -> "SurfaceLinearization":
        """Same ``a`` with ``b`` multiplied by ``factor`` (for what-if studies)."""
        return SurfaceLinearization(self.a, factor * self.b)


def linearize_reaction(sys: SpeciesSystem, c_surf_star) -> SurfaceLinearization:
    c = _species_first(sys, c_surf_star, "c_surf_star")
    _require_nonnegative(c, "c_surf_star")
    if c.ndim > 2:
        raise DomainError(f"c_surf_star must be 1-D or 2-D, got shape {c.shape}")
    n = sys.n_species
    b = np.zeros(c.shape)
    eye = np.eye(n)
    for k in range(n):
        if sys.beta[k] != 0.0:
            b[k] += sys.kappa_b * sys.beta[k] * monomial(c, sys.beta - eye[k])
        if sys.alpha[k] != 0.0:
            b[k] -= sys.kappa_f * sys.alpha[k] * monomial(c, sys.alpha - eye[k])
    return SurfaceLinearization(sys.stoich.copy(), b)


def rank_one_spectrum(lin: SurfaceLinearization) -> np.ndarray:
    """Closed-form eigenvalues of ``a (x) b``: ``a.b`` and N-1 zeros.

    Returns shape ``(N,)`` or ``(P, N)``, sorted ascending.
    """
    n = lin.a.size
    ab = lin.b_points @ lin.a
    out = np.zeros((ab.size, n))
    out[:, 0] = ab
    out.sort(axis=1)
    return out if lin.pointwise else out[0]


def symmetric_part_spectrum(lin: SurfaceLinearization) -> np.ndarray:
    """Closed-form eigenvalues of ``S = (M + M^T)/2``, sorted ascending.

    For N >= 2 the spectrum is ``(a.b + |a||b|)/2``, ``(a.b - |a||b|)/2`` and
    N-2 zeros.  For linearly dependent ``a, b`` one of the first two is zero
    and the other equals ``a.b``.
    """
    n = lin.a.size
    ab = lin.b_points @ lin.a
    norms = lin.ab_norm
    out = np.zeros((ab.size, n))
    if n == 1:
        out[:, 0] = ab
    else:
        out[:, 0] = 0.5 * (ab + norms)
        out[:, 1] = 0.5 * (ab - norms)
    out.sort(axis=1)
    return out if lin.pointwise else out[0]


def linearly_dependent(lin: SurfaceLinearization, rtol: float = 1e-12) -> np.ndarray:
    ab = np.abs(lin.b_points @ lin.a)
    norms = lin.ab_norm
    return norms - ab <= rtol * norms
