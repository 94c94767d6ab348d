import numpy as np
import pytest
from hypothesis import given, strategies as st

from porestab.errors import (
    ConfigurationError,
    DomainError,
    SingularLinearizationError,
    UnsupportedConstructionError,
)
from porestab.model import (
    SpeciesSystem,
    SurfaceLinearization,
    balance_level,
    equilibrium_chemical_balance,
    linearize_reaction,
    linearly_dependent,
    monomial,
    rank_one_spectrum,
    reaction_rate,
    sorption_rate,
    symmetric_part_spectrum,
)

from conftest import ab_system

coeff = st.one_of(st.just(0.0), st.floats(1.0, 3.0))
positive = st.floats(0.1, 5.0)


@st.composite
def systems(draw, n=None):
    n = draw(st.integers(1, 4)) if n is None else n
    alpha = draw(st.lists(coeff, min_size=n, max_size=n).filter(any))
    beta = draw(st.lists(coeff, min_size=n, max_size=n).filter(any))
    return SpeciesSystem(alpha, beta, draw(positive), draw(positive),
                         draw(positive), draw(positive), draw(positive), draw(positive))


def numeric_b(sys, c, h=1e-6):
    """Central-difference gradient of the net rate kappa_b c^beta - kappa_f c^alpha."""
    def net(x):
        return sys.kappa_b * np.prod(x ** sys.beta) - sys.kappa_f * np.prod(x ** sys.alpha)
    out = np.empty(c.size)
    for k in range(c.size):
        e = np.zeros(c.size)
        e[k] = h
        out[k] = (net(c + e) - net(c - e)) / (2 * h)
    return out


def test_hand_evaluated_linearization():
    sys = ab_system(kappa_f=1.0, kappa_b=1.0)
    lin = linearize_reaction(sys, [1.0, 1.0])
    np.testing.assert_array_equal(lin.a, [1, -1])
    np.testing.assert_allclose(lin.b, [-1, 1])
    assert lin.a @ lin.b == pytest.approx(-2.0)
    np.testing.assert_allclose(symmetric_part_spectrum(lin), [-2.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(lin.s_sym), [-2.0, 0.0], atol=1e-14)


def test_orthogonal_unit_vectors():
    lin = SurfaceLinearization(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(symmetric_part_spectrum(lin), [-0.5, 0.0, 0.5])


def test_zero_stoichiometry_gives_zero_jacobian():
    sys = SpeciesSystem([1, 1], [1, 1], 0.5, 2.0, 1, 1, 1, 1)
    lin = linearize_reaction(sys, [0.7, 1.3])
    assert not lin.m_tilde.any()
    np.testing.assert_array_equal(reaction_rate(sys, [[0.1, 2.0], [3.0, 0.5]]), 0.0)


def test_monomial_zero_to_zero_is_one():
    c = np.array([0.0, 2.0])
    assert monomial(c, [0.0, 2.0]) == 4.0
    assert monomial(c, [1.0, 0.0]) == 0.0
    with pytest.raises(SingularLinearizationError):
        monomial(c, [-1.0, 0.0])


def test_reaction_rate_rejects_negative_concentration():
    with pytest.raises(DomainError, match="species 1"):
        reaction_rate(ab_system(), [0.5, -1e-3])


@pytest.mark.parametrize("field, kwargs", [
    ("kappa_f", dict(kappa_f=-1.0)),
    ("kappa_b", dict(kappa_b=0.0)),
    ("k_ad", dict(k_ad=[1.0, 0.0])),
    ("d_surf", dict(d_surf=np.nan)),
    ("alpha", dict(alpha=[0.5, 0.0])),
    ("beta", dict(beta=[0.0, 0.0])),
])
def test_invalid_parameters_name_the_field(field, kwargs):
    with pytest.raises(ConfigurationError, match=field):
        ab_system(**kwargs)


def test_parameters_broadcast_and_freeze():
    sys = ab_system(k_ad=2.0)
    np.testing.assert_array_equal(sys.k_ad, [2.0, 2.0])
    with pytest.raises(ValueError):
        sys.k_ad[0] = 5.0
    assert sys.alpha_ne_beta
    assert sys.replace(kappa_f=3.0).kappa_f == 3.0


def test_sorption_rate():
    sys = ab_system(k_ad=[2.0, 1.0], k_de=[1.0, 3.0])
    np.testing.assert_allclose(sorption_rate(sys, [1.0, 1.0], [1.0, 1.0]), [1.0, -2.0])


@given(systems(), st.lists(st.floats(0.2, 3.0), min_size=4, max_size=4))
def test_b_matches_finite_differences(sys, values):
    c = np.array(values[: sys.n_species])
    lin = linearize_reaction(sys, c)
    np.testing.assert_allclose(lin.b, numeric_b(sys, c), rtol=1e-6, atol=1e-6)


@given(systems(), st.lists(st.floats(0.2, 3.0), min_size=4, max_size=4))
def test_jacobian_matches_finite_differences_of_rate(sys, values):
    c = np.array(values[: sys.n_species])
    lin = linearize_reaction(sys, c)
    h = 1e-6
    jac = np.column_stack([
        (reaction_rate(sys, c + h * e) - reaction_rate(sys, c - h * e)) / (2 * h)
        for e in np.eye(sys.n_species)
    ])
    np.testing.assert_allclose(lin.m_tilde, jac, rtol=1e-6, atol=1e-6)


@given(st.integers(1, 6), st.data())
def test_closed_form_spectra_match_dense(n, data):
    vec = st.lists(st.floats(-3, 3), min_size=n, max_size=n)
    a, b = np.array(data.draw(vec)), np.array(data.draw(vec))
    lin = SurfaceLinearization(a, b)
    scale = max(1.0, np.linalg.norm(a) * np.linalg.norm(b))
    dense = np.sort_complex(np.linalg.eigvals(lin.m_tilde))
    np.testing.assert_allclose(dense.imag, 0.0, atol=1e-12 * scale)
    np.testing.assert_allclose(np.sort(dense.real), rank_one_spectrum(lin), atol=1e-12 * scale)
    np.testing.assert_allclose(np.linalg.eigvalsh(lin.s_sym), symmetric_part_spectrum(lin),
                               atol=1e-12 * scale)


def test_pointwise_linearization_shapes():
    sys = ab_system()
    c = np.array([[1.0, 2.0, 0.5], [1.0, 0.3, 2.0]])
    lin = linearize_reaction(sys, c)
    assert lin.pointwise
    assert lin.m_tilde.shape == (3, 2, 2)
    assert rank_one_spectrum(lin).shape == (3, 2)
    for p in range(3):
        single = linearize_reaction(sys, c[:, p])
        np.testing.assert_allclose(lin.m_tilde[p], single.m_tilde)


def test_linear_dependence_flag():
    lin = SurfaceLinearization(np.array([1.0, -1.0]), np.array([[-2.0, 1.0], [2.0, 1.0]]))
    np.testing.assert_array_equal(linearly_dependent(lin), [True, False])


@given(systems().filter(lambda s: s.order_forward != s.order_backward))
def test_chemical_balance_is_equilibrium_with_nonpositive_symmetric_part(sys):
    psi, xi = equilibrium_chemical_balance(sys)
    gamma = balance_level(sys)
    np.testing.assert_allclose(xi, gamma)
    np.testing.assert_allclose(psi, sys.k_de / sys.k_ad * xi)
    scale = sys.kappa_f * gamma ** sys.order_forward
    assert np.max(np.abs(reaction_rate(sys, xi))) <= 1e-12 * max(1.0, scale)
    lin = linearize_reaction(sys, xi)
    s_max = np.linalg.eigvalsh(lin.s_sym).max()
    assert s_max <= 1e-12 * max(1.0, lin.criterion_lhs)
    # b is antiparallel to a at a chemical balance
    assert linearly_dependent(lin, 1e-10).all()


def test_balance_with_equal_orders():
    assert balance_level(ab_system()) == 1.0
    assert balance_level(SpeciesSystem([1, 1], [1, 1], 1.0, 2.0, 1, 1, 1, 1)) == 1.0
    with pytest.raises(UnsupportedConstructionError):
        balance_level(ab_system(kappa_f=1.0, kappa_b=2.0))


def test_balance_level_value():
    sys = SpeciesSystem([2, 0], [0, 1], 0.5, 2.0, 1, 1, 1, 1)
    assert balance_level(sys) == pytest.approx(4.0)
