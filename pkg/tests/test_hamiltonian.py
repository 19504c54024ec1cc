import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from husimiflow.hamiltonian import (
    Hamiltonian,
    PhasePoint,
    adjoint,
    build_hamiltonian,
    classical_symbol,
    complex_harmonic_oscillator,
    damped_anharmonic_oscillator,
    flow_velocity,
    fock_matrix,
    gamma,
    harmonic_oscillator,
    hermitian_part,
    pt_anharmonic_oscillator,
)
from oracles import P0_PT, bisect_root, ladder_operator, real_flow_fd, symbol_brute

finite = st.floats(-10, 10, allow_nan=False)
coeff = st.builds(complex, st.floats(-2, 2), st.floats(-2, 2))
terms_st = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), coeff, max_size=6)


@st.composite
def hermitian_terms(draw):
    out = {}
    for (m, n), c in draw(terms_st).items():
        if m == n:
            out[(m, n)] = complex(c.real, 0)
        else:
            out[(m, n)] = c
            out[(n, m)] = c.conjugate()
    return out


@st.composite
def small_points(draw):
    q, p = draw(finite), draw(finite)
    # |z| <= 10
    r = math.hypot(q, p) / math.sqrt(2)
    if r > 10:
        q, p = q * 10 / r, p * 10 / r
    return PhasePoint(q, p)


# -- construction ------------------------------------------------------------


def test_build_merges_and_drops_zero():
    H = build_hamiltonian([(1, 1, 1), (1, 1, 2), (0, 2, 1), (0, 2, -1)])
    assert dict(H.terms) == {(1, 1): 3}


def test_empty_is_zero_hamiltonian():
    H = build_hamiltonian([])
    assert H.max_degree == 0
    assert classical_symbol(H, PhasePoint(1.3, -2.0)) == 0


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        build_hamiltonian([(-1, 0, 1.0)])


def test_complex_oscillator_terms():
    H = complex_harmonic_oscillator(1.0, 0.15)
    assert H == build_hamiltonian([(1, 1, 1 - 0.15j), (0, 0, (1 - 0.15j) / 2)])


@given(terms_st)
def test_no_zero_coefficients_stored(terms):
    assert all(c != 0 for c in Hamiltonian(terms).terms.values())


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_phase_point_round_trip(q, p):
    pt = PhasePoint(q, p)
    back = PhasePoint.from_z(pt.z)
    # scaling by 1/sqrt(2) is not injective on doubles, so the recovered point
    # is a preimage of the same z, at most one ulp away
    assert back.z == pt.z
    assert abs(back.q - q) <= math.ulp(q)
    assert abs(back.p - p) <= math.ulp(p)


# -- symbol ------------------------------------------------------------------


def test_symbol_at_origin():
    H = complex_harmonic_oscillator(1.0, 0.15)
    assert classical_symbol(H, PhasePoint(0, 0)) == pytest.approx((1 - 0.15j) * 0.5, abs=1e-15)


@given(small_points())
def test_pt_symbol_polynomial_form(pt):
    b, e = 0.25, 1.0
    r2 = pt.q**2 + pt.p**2
    expected = r2 / 2 + b / 4 * r2**2 - 1j * e * pt.q
    got = classical_symbol(pt_anharmonic_oscillator(b, e), pt)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


@given(terms_st, small_points())
def test_symbol_matches_brute_sum(terms, pt):
    H = Hamiltonian(terms)
    ref = symbol_brute(terms, pt.q, pt.p) if terms else 0
    assert classical_symbol(H, pt) == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_symbol_vectorized_matches_scalar():
    H = damped_anharmonic_oscillator()
    z = np.array([0.3 + 1j, -2 + 0.5j, 4j])
    vec = H.symbol(z)
    assert np.allclose(vec, [H.symbol(complex(x)) for x in z], rtol=0, atol=1e-13)


def test_gamma_values():
    assert gamma(pt_anharmonic_oscillator(0.25, 1.0), PhasePoint(1.0, 0.0)) == pytest.approx(-1.0)
    # |z|^2 = 1 at q = sqrt(2)
    g = gamma(complex_harmonic_oscillator(1.0, 0.15), PhasePoint(math.sqrt(2), 0))
    assert g == pytest.approx(-1.5 * 0.15, rel=1e-14)


@given(terms_st, small_points())
def test_symbol_splits_into_parts(terms, pt):
    H = Hamiltonian(terms)
    K = classical_symbol(H, pt)
    assert hermitian_part(H, pt) == K.real
    assert gamma(H, pt) == (0.0 if H.is_hermitian() else K.imag)


@given(terms_st, small_points())
def test_adjoint_conjugates_symbol(terms, pt):
    H = Hamiltonian(terms)
    assert classical_symbol(adjoint(H), pt) == pytest.approx(
        classical_symbol(H, pt).conjugate(), rel=1e-12, abs=1e-12)


@given(terms_st)
def test_adjoint_is_involution(terms):
    H = Hamiltonian(terms)
    assert adjoint(adjoint(H)) == H


def test_adjoint_of_complex_oscillator():
    A = adjoint(complex_harmonic_oscillator(1.0, 0.15))
    assert A.terms[(1, 1)] == 1 + 0.15j


@given(hermitian_terms(), small_points())
def test_hermitian_has_zero_gamma(terms, pt):
    H = Hamiltonian(terms)
    assert H.is_hermitian()
    assert adjoint(H) == H
    assert gamma(H, pt) == 0.0
    assert abs(classical_symbol(H, pt).imag) <= 1e-12 * (1 + abs(classical_symbol(H, pt)))


@given(terms_st)
def test_is_hermitian_matches_definition(terms):
    H = Hamiltonian(terms)
    t = H.terms
    expected = all(t.get((n, m), 0) == c.conjugate() for (m, n), c in t.items())
    assert H.is_hermitian() is expected


lattice_coeff = st.builds(lambda a, b: complex(a, b) / 4, st.integers(-8, 8), st.integers(-8, 8))


@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), lattice_coeff, max_size=6))
def test_gamma_vanishes_iff_hermitian(terms):
    H = Hamiltonian(terms)
    rng = np.random.default_rng(0)
    z = rng.normal(size=40) + 1j * rng.normal(size=40)
    vanishes = np.all(np.abs(H.symbol(z).imag) < 1e-12)
    assert vanishes == H.is_hermitian()


# -- flow ----------------------------------------------------------------------


def test_oscillator_velocity():
    q_dot, p_dot = flow_velocity(harmonic_oscillator(1.0), PhasePoint(1.0, 0.0))
    assert (q_dot, p_dot) == pytest.approx((0.0, -1.0), abs=1e-15)


@given(small_points())
def test_complex_oscillator_velocity(pt):
    H = complex_harmonic_oscillator(1.0, 0.15)
    expected = -1j * (1 + 0.15j) * pt.z
    assert H.zeta_velocity(pt.z) == pytest.approx(expected, rel=1e-13, abs=1e-14)


@pytest.mark.parametrize("H", [complex_harmonic_oscillator(1.0, 0.15),
                               damped_anharmonic_oscillator(0.05, 0.05, 1.0),
                               pt_anharmonic_oscillator(0.25, 1.0)])
@given(pt=small_points())
def test_velocity_matches_finite_differences(H, pt):
    fd = np.array(real_flow_fd(dict(H.terms), pt.q, pt.p))
    got = np.array(flow_velocity(H, pt))
    scale = max(1.0, np.abs(fd).max())
    assert np.abs(got - fd).max() / scale < 1e-6


@given(terms_st, small_points())
def test_velocity_equals_complex_form(terms, pt):
    H = Hamiltonian(terms)
    v = math.sqrt(2) * (-1j) * np.conj(H.dsymbol_dz(pt.z))
    assert complex(*flow_velocity(H, pt)) == v


def test_pt_fixed_point_is_stationary():
    p0 = bisect_root(lambda p: p**3 + 4 * p + 4, -2.0, 0.0)
    assert p0 == pytest.approx(P0_PT, abs=1e-15)
    v = flow_velocity(pt_anharmonic_oscillator(0.25, 1.0), PhasePoint(0.0, p0))
    assert np.hypot(*v) < 1e-14


@given(small_points())
def test_jacobian_matches_finite_differences(pt):
    H = damped_anharmonic_oscillator()
    h = 1e-6
    J = H.jacobian(pt.z)
    cols = []
    for dq, dp in ((h, 0), (0, h)):
        plus = np.array(flow_velocity(H, PhasePoint(pt.q + dq, pt.p + dp)))
        minus = np.array(flow_velocity(H, PhasePoint(pt.q - dq, pt.p - dp)))
        cols.append((plus - minus) / (2 * h))
    fd = np.column_stack(cols)
    assert np.abs(J - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


# -- Fock matrix ---------------------------------------------------------------


def test_number_operator_diagonal():
    assert np.array_equal(fock_matrix(build_hamiltonian([(1, 1, 1)]), 3), np.diag([0, 1, 2, 3]))


def test_quartic_term():
    assert np.allclose(fock_matrix(build_hamiltonian([(2, 2, 1)]), 2), np.diag([0, 0, 2]), atol=0)


def test_complex_oscillator_eigenvalues():
    M = fock_matrix(complex_harmonic_oscillator(1.0, 0.15), 20)
    ev = np.sort_complex(np.linalg.eigvals(M))
    assert np.allclose(ev, (1 - 0.15j) * (np.arange(21) + 0.5), atol=1e-12)


def test_rejects_truncation_that_drops_a_term():
    with pytest.raises(ValueError):
        fock_matrix(build_hamiltonian([(3, 0, 1)]), 2)


@given(terms_st)
def test_fock_matrix_matches_ladder_products(terms):
    H = Hamiltonian(terms)
    n_max = max(H.max_degree, 1) + 6
    ref = ladder_operator(dict(H.terms), n_max)
    assert np.allclose(H.fock_matrix(n_max), ref, rtol=1e-12, atol=1e-10)


@given(hermitian_terms())
def test_hermitian_fock_matrix_is_hermitian(terms):
    H = Hamiltonian(terms)
    M = H.fock_matrix(max(H.max_degree, 1) + 8)
    assert np.allclose(M, M.conj().T, rtol=1e-14, atol=1e-12)


def test_large_truncation_stays_finite():
    M = fock_matrix(build_hamiltonian([(3, 4, 1.0), (2, 2, 0.5)]), 512)
    assert np.all(np.isfinite(M))
    # <k-1| a^dag^3 a^4 |k> = sqrt(k!/(k-4)!) sqrt((k-1)!/(k-4)!)
    k = 512
    ref = math.exp(0.5 * (math.lgamma(k + 1) - math.lgamma(k - 3))
                   + 0.5 * (math.lgamma(k) - math.lgamma(k - 3)))
    assert M[k - 1, k] == pytest.approx(ref, rel=1e-11)


def test_records_round_trip():
    H = damped_anharmonic_oscillator()
    assert Hamiltonian.from_records(H.to_records()) == H
    assert H.digest() == Hamiltonian.from_records(H.to_records()).digest()
