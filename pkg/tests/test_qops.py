import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhcavity.qops import (SingularMatrixError, as_complex_matrix, basis_index, build_operators,
                           eig2, solve_linear)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


@pytest.mark.parametrize("n_fock", [1, 2, 3, 6])
def test_operator_shapes_and_adjoints(n_fock):
    ops = build_operators(n_fock)
    dim = 2 * (n_fock + 1)
    for op in (ops.a, ops.a_dag, ops.sigma_minus, ops.sigma_plus, ops.identity):
        assert op.shape == (dim, dim)
    assert np.array_equal(ops.a_dag, ops.a.conj().T)
    assert np.array_equal(ops.sigma_plus, ops.sigma_minus.conj().T)


def test_eight_by_eight_at_three_photons():
    assert build_operators(3).a.shape == (8, 8)


@pytest.mark.parametrize("n_fock", [1, 3, 5])
def test_ladder_matrix_elements(n_fock):
    ops = build_operators(n_fock)
    for m in range(n_fock + 1):
        for n in range(n_fock + 1):
            expected = np.sqrt(n) if m == n - 1 else 0.0
            got = ops.a[basis_index(False, m, n_fock), basis_index(False, n, n_fock)]
            assert got == expected


def test_number_operator_and_commutator():
    n_fock = 4
    ops = build_operators(n_fock)
    comm = ops.a @ ops.a_dag - ops.a_dag @ ops.a
    for n in range(n_fock + 1):
        ket = np.zeros(ops.dim, dtype=complex)
        ket[basis_index(False, n, n_fock)] = 1
        assert np.allclose(ops.photon_number @ ket, n * ket)
        if n < n_fock:
            assert np.allclose(comm @ ket, ket)


def test_excited_projector_trace():
    ops = build_operators(3)
    proj = ops.atom_excitation
    assert np.allclose(proj @ proj, proj)
    assert np.trace(proj).real == pytest.approx(4)


def test_operators_are_read_only():
    ops = build_operators(2)
    with pytest.raises(ValueError):
        ops.a[0, 0] = 1


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_build_rejects_bad_truncation(bad):
    with pytest.raises(ValueError):
        build_operators(bad)


def test_complex_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_complex_matrix([[1, np.nan], [0, 1]])
    with pytest.raises(ValueError):
        as_complex_matrix([1, 2])


def test_eig2_diagonal():
    res = eig2(np.diag([1.0, 2.0]))
    assert {res.e_plus, res.e_minus} == {2, 1}
    assert res.e_plus == 2
    assert not res.defective
    v = res.vectors
    assert np.allclose(np.diag([1.0, 2.0]) @ v, v @ np.diag([res.e_plus, res.e_minus]))


def test_eig2_exceptional_point():
    m = [[-3.03j, 121.485], [121.485, -246j]]
    res = eig2(m)
    assert abs(res.e_plus - (-124.515j)) < 1e-9
    assert abs(res.e_minus - (-124.515j)) < 1e-9
    assert res.defective


def test_eig2_vector_form():
    a, g, d = -3.03j, 5.0, -13j
    res = eig2([[a, g], [g, d]])
    assert np.allclose(res.vectors[:, 0], [g, res.e_plus - a])
    assert np.allclose(res.vectors[:, 1], [g, res.e_minus - a])


def test_eig2_principal_branch_on_negative_discriminant():
    # disc = -4 exactly: principal root is +2i
    res = eig2([[0, 1], [-1, 0]])
    assert res.e_plus == 1j
    assert res.e_minus == -1j


@settings(max_examples=1000, deadline=None)
@given(st.lists(cplx, min_size=4, max_size=4))
def test_eig2_trace_and_determinant(entries):
    m = np.array(entries).reshape(2, 2)
    res = eig2(m)
    scale = max(1.0, np.abs(m).max())
    assert abs(res.e_plus + res.e_minus - np.trace(m)) <= 1e-12 * scale * 4
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    assert abs(res.e_plus * res.e_minus - det) <= 1e-12 * scale**2 * 8


@settings(max_examples=300, deadline=None)
@given(st.lists(cplx, min_size=4, max_size=4))
def test_eig2_vectors_are_eigenvectors(entries):
    m = np.array(entries).reshape(2, 2)
    res = eig2(m)
    scale = max(1.0, np.abs(m).max())
    for lam, v in ((res.e_plus, res.vectors[:, 0]), (res.e_minus, res.vectors[:, 1])):
        assert np.linalg.norm(m @ v - lam * v) <= 1e-9 * scale * max(1.0, np.linalg.norm(v))


def test_solve_identity_and_diagonal():
    b = np.array([1 + 2j, 3, -4j])
    assert np.allclose(solve_linear(np.eye(3), b), b)
    assert np.allclose(solve_linear([[2, 0], [0, 4]], [2, 4]), [1, 1])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solve_residual_on_random_systems(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)) + 8 * np.eye(8)
    b = rng.normal(size=8) + 1j * rng.normal(size=8)
    x = solve_linear(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_reports_singular_with_condition():
    with pytest.raises(SingularMatrixError) as info:
        solve_linear([[1, 2], [2, 4]], [1, 1])
    assert info.value.condition > 1e15 or not np.isfinite(info.value.condition)


def test_solve_shape_checks():
    with pytest.raises(ValueError):
        solve_linear(np.ones((2, 3)), [1, 1])
    with pytest.raises(ValueError):
        solve_linear(np.eye(2), [1, 1, 1])
