import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from husimiflow.errors import LeakageExceededError
from husimiflow.grid_io import PhaseGrid, ScalarField, integrate_field
from husimiflow.hamiltonian import PhasePoint
from husimiflow.states import (
    FockState,
    InitialStateSpec,
    coherent_overlap,
    coherent_state,
    complex_ho_husimi_oracle,
    complex_ho_norm_landscape_oracle,
    default_n_max,
    displaced_fock_husimi,
    displaced_fock_vector,
    number_state,
)
from oracles import coherent_brute, complex_ho_husimi, complex_ho_norm, displaced_fock_expm, husimi_dense

centers = st.builds(complex, st.floats(-3, 3), st.floats(-3, 3))


def test_vacuum_overlaps():
    vac = number_state(0, 10)
    assert coherent_overlap(vac, PhasePoint(0, 0)) == 1
    # |z|^2 = 2 at q = p = sqrt(2)
    ov = coherent_overlap(vac, PhasePoint(math.sqrt(2), math.sqrt(2)))
    assert ov == pytest.approx(math.exp(-1), rel=1e-15)


def test_coherent_amplitudes_match_brute_force():
    z = 2.1 - 1.3j
    assert np.allclose(coherent_state(z, 200).amps, coherent_brute(z, 200), rtol=1e-12, atol=1e-300)


@given(centers, centers)
def test_coherent_overlap_identity(z0, z):
    psi = FockState(coherent_brute(z0, 200))
    got = abs(coherent_overlap(psi, z)) ** 2
    assert got == pytest.approx(math.exp(-abs(z - z0) ** 2), rel=1e-10, abs=1e-13)


def test_overlap_shapes():
    psi = coherent_state(0.5, 40)
    z = np.zeros((3, 4), dtype=complex)
    assert coherent_overlap(psi, z).shape == (3, 4)
    assert np.isscalar(coherent_overlap(psi, 0.3j)) or np.ndim(coherent_overlap(psi, 0.3j)) == 0


def test_overlap_matches_dense_bras():
    rng = np.random.default_rng(3)
    amps = rng.normal(size=31) + 1j * rng.normal(size=31)
    psi = FockState(amps)
    z = rng.normal(size=12) * 2 + 1j * rng.normal(size=12) * 2
    got = np.abs(coherent_overlap(psi, z)) ** 2
    assert np.allclose(got, husimi_dense(amps, z), rtol=1e-11)


def test_displaced_fock_husimi_examples():
    assert displaced_fock_husimi(0, 0, 0j) == 1
    zc = 1 + 2j
    assert displaced_fock_husimi(2, zc, zc) == 0
    assert displaced_fock_husimi(1, zc, zc + 1j) == pytest.approx(math.exp(-1), rel=1e-15)


def test_displaced_fock_husimi_rejects_negative_n():
    with pytest.raises(ValueError):
        displaced_fock_husimi(-1, 0, 0)


def test_displaced_vector_trivial_cases():
    v = displaced_fock_vector(0, 0, 10).amps
    assert v[0] == 1 and np.all(v[1:] == 0)
    zc = 1.5 - 0.5j
    assert np.allclose(displaced_fock_vector(0, zc, 40).amps, coherent_brute(zc, 40), rtol=1e-13)


@pytest.mark.parametrize("n", [0, 1, 2, 3, 5])
def test_displaced_vector_matches_matrix_exponential(n):
    zc = (2.0 - 1.0j) / math.sqrt(2)
    got = displaced_fock_vector(n, zc, 40).amps
    ref = displaced_fock_expm(n, zc, 40)
    assert np.abs(got - ref).max() < 1e-12


def test_displaced_vector_husimi_on_fig2_grid():
    zc = complex(-3, 5) / math.sqrt(2)
    psi = displaced_fock_vector(2, zc, 96)
    grid = PhaseGrid.square(7.0, 201)
    z = grid.z()
    got = np.abs(coherent_overlap(psi, z)) ** 2
    ref = displaced_fock_husimi(2, zc, z)
    assert np.abs(got - ref).max() < 1e-8


def test_displaced_vector_reports_leakage():
    with pytest.raises(LeakageExceededError) as info:
        displaced_fock_vector(2, 4 + 4j, 30)
    assert info.value.leakage > 1e-10


@given(centers, st.integers(0, 4))
def test_default_truncation_holds_state(zc, n):
    # must not raise
    psi = displaced_fock_vector(n, zc, default_n_max(zc, n))
    assert psi.norm2 == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("kind,n,qc,pc", [("coherent", 0, 0.0, 0.0), ("displaced_fock", 2, 4.0, 2.0),
                                          ("displaced_fock", 3, 5.0, 3.0),
                                          ("displaced_fock", 2, -3.0, 5.0)])
def test_initial_husimi_is_normalized(kind, n, qc, pc):
    spec = InitialStateSpec.from_qp(kind, n, qc, pc)
    grid = PhaseGrid(qc - 10, qc + 10, pc - 10, pc + 10, 301, 301)
    f = ScalarField(grid, spec(grid.z()))
    assert integrate_field(f) == pytest.approx(1.0, abs=1e-4)


def test_initial_spec_validation():
    with pytest.raises(ValueError):
        InitialStateSpec("squeezed")
    with pytest.raises(ValueError):
        InitialStateSpec("displaced_fock", -1)
    with pytest.raises(ValueError):
        InitialStateSpec("coherent", 2)


def test_initial_spec_log_matches_plain():
    spec = InitialStateSpec.from_qp("displaced_fock", 2, 1.0, -1.0)
    z = np.array([0.1 + 0.2j, 3 - 1j, spec.zc + 0.5])
    assert np.allclose(np.exp(spec.log_husimi(z)), spec.husimi(z), rtol=1e-14)
    assert spec.log_husimi(np.array([spec.zc]))[0] == -np.inf


def test_initial_spec_coordinates():
    spec = InitialStateSpec.from_qp("displaced_fock", 2, 4.0, 2.0)
    assert spec.zc == pytest.approx(complex(4, 2) / math.sqrt(2))
    assert (spec.qc, spec.pc) == pytest.approx((4.0, 2.0), rel=1e-15)


def test_fock_state_is_read_only_and_round_trips(tmp_path):
    psi = displaced_fock_vector(1, 0.3 + 0.4j, 20)
    with pytest.raises(ValueError):
        psi.amps[0] = 0
    psi.to_csv(tmp_path / "s.csv")
    back = FockState.from_csv(tmp_path / "s.csv")
    assert back.amps.tobytes() == psi.amps.tobytes()


def test_fock_state_rejects_empty():
    with pytest.raises(ValueError):
        FockState([])


# -- closed forms ------------------------------------------------------------


def test_oracle_reduces_to_initial_at_t0():
    zc = complex(4, 2) / math.sqrt(2)
    z = PhaseGrid.square(7.0, 41).z()
    for n in (0, 2):
        assert np.allclose(complex_ho_husimi_oracle(n, zc, 1.0, 0.15, 0.0, z),
                           displaced_fock_husimi(n, zc, z), rtol=1e-14, atol=0)


@pytest.mark.parametrize("n", [0, 1, 2, 4])
def test_oracle_matches_fock_space_derivation(n):
    zc = complex(4, 2) / math.sqrt(2)
    z = PhaseGrid.square(7.0, 31).z()
    for t in (0.4, 2 * math.pi / 3, 3.0):
        ref = complex_ho_husimi(n, zc, 1.0, 0.15, t, z)
        got = complex_ho_husimi_oracle(n, zc, 1.0, 0.15, t, z)
        assert np.allclose(got, ref, rtol=1e-11, atol=1e-300)


def test_oracle_without_norm_factor_differs_by_constant():
    zc = 2.0 + 1.0j
    z = np.array([0.1, 1 + 1j, -2j])
    a = complex_ho_husimi_oracle(1, zc, 1.0, 0.15, 1.3, z)
    b = complex_ho_husimi_oracle(1, zc, 1.0, 0.15, 1.3, z, norm_factor=False)
    ratio = a / b
    assert np.allclose(ratio, ratio[0], rtol=1e-14)
    assert ratio[0] == pytest.approx(math.exp(-abs(zc) ** 2 * (1 - math.exp(-0.3 * 1.3))))


def test_oracle_coherent_case():
    zc = 1.0 + 0.5j
    t, g = 1.7, 0.15
    z = np.array([0.3 - 0.2j, 2j])
    center = zc * np.exp(-1j * complex(1.0, -g) * t)
    expected = np.exp(-g * t - abs(zc) ** 2 * (1 - math.exp(-2 * g * t)) - np.abs(z - center) ** 2)
    assert np.allclose(complex_ho_husimi_oracle(0, zc, 1.0, g, t, z), expected, rtol=1e-14)


def test_oracle_hermitian_limit_rotates():
    zc = 1.0 + 0.5j
    z = np.array([0.3 - 0.2j, 2j, 1 + 1j])
    t = 0.9
    rotated = displaced_fock_husimi(2, zc, z * np.exp(1j * t))
    assert np.allclose(complex_ho_husimi_oracle(2, zc, 1.0, 0.0, t, z), rotated, rtol=1e-13)


def test_norm_landscape_oracle():
    g, t = 0.15, 2.0
    assert complex_ho_norm_landscape_oracle(1.0, g, t, 0j) == pytest.approx(math.exp(-g * t))
    assert complex_ho_norm_landscape_oracle(1.0, 0.0, t, 3 + 2j) == 1.0
    assert complex_ho_norm_landscape_oracle(1.0, g, 500.0, 0.5) < 1e-30
    z = PhaseGrid.square(7.0, 21).z()
    assert np.allclose(complex_ho_norm_landscape_oracle(1.0, g, t, z),
                       complex_ho_norm(1.0, g, t, z), rtol=1e-13)


def test_oracles_reject_negative_gamma():
    with pytest.raises(ValueError):
        complex_ho_husimi_oracle(0, 0, 1.0, -0.1, 1.0, 0)
    with pytest.raises(ValueError):
        complex_ho_norm_landscape_oracle(1.0, -0.1, 1.0, 0)
