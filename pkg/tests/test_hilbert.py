import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from zenodistill.hilbert import (
    BipartiteSpace,
    DefectiveMatrixError,
    NotHermitianError,
    StateVector,
    eig_general,
    expm_unitary,
    tensor_index,
)
from zenodistill.models import ChainParams, build_chain

from oracles import expm_taylor, random_hermitian


@pytest.mark.parametrize(
    "dims, m, s, expected",
    [((3, 4), 0, 0, 0), ((3, 4), 1, 2, 6), ((2, 2), 1, 1, 3)],
)
def test_tensor_index(dims, m, s, expected):
    space = BipartiteSpace(*dims)
    assert tensor_index(space, m, s) == expected
    assert space.split(expected) == (m, s)


def test_tensor_index_out_of_range():
    space = BipartiteSpace(3, 4)
    with pytest.raises(IndexError):
        tensor_index(space, 3, 0)
    with pytest.raises(IndexError):
        tensor_index(space, 0, 4)
    with pytest.raises(IndexError):
        tensor_index(space, -1, 0)


@given(st.integers(2, 7), st.integers(1, 9), st.data())
def test_tensor_index_bijective(md, sd, data):
    space = BipartiteSpace(md, sd)
    k = data.draw(st.integers(0, space.dim - 1))
    assert tensor_index(space, *space.split(k)) == k


def test_space_rejects_bad_dims():
    with pytest.raises(ValueError):
        BipartiteSpace(1, 3)
    with pytest.raises(ValueError):
        BipartiteSpace(2, 0)


def test_state_vector_normalization_flag():
    StateVector([1, 0, 0])
    with pytest.raises(ValueError):
        StateVector([1, 1])
    psi = StateVector.from_amplitudes([1, 1j])
    assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        StateVector([np.nan, 1.0], normalized=False)


def test_expm_zero_generator_is_identity():
    for dim in (1, 3, 6):
        np.testing.assert_array_equal(expm_unitary(np.zeros((dim, dim)), 1.0), np.eye(dim))


def test_expm_rabi_quarter_period():
    omega = 1.7
    h = np.array([[0, omega], [omega, 0]])
    u = expm_unitary(h, np.pi / (2 * omega))
    np.testing.assert_allclose(u, [[0, -1j], [-1j, 0]], atol=1e-12)


def test_expm_chain_matches_taylor_oracle():
    h = build_chain(ChainParams((1.0, 1.0, 1.0))).matrix
    u = expm_unitary(h, 0.7)
    ref = expm_taylor(-1j * 0.7 * np.asarray(h))
    assert np.max(np.abs(u - ref)) < 1e-10


def test_expm_rejects_non_hermitian():
    with pytest.raises(NotHermitianError, match="1.000e-03"):
        expm_unitary(np.array([[0, 1.001], [1.0, 0]]), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.floats(0, 10), st.integers(0, 2**32 - 1))
def test_expm_unitary_property(dim, tau, seed):
    h = random_hermitian(dim, np.random.default_rng(seed))
    u = expm_unitary(h, tau)
    assert np.max(np.abs(u.conj().T @ u - np.eye(dim))) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 24), st.floats(0, 5), st.floats(0, 5), st.integers(0, 2**32 - 1))
def test_expm_group_property(dim, t1, t2, seed):
    h = random_hermitian(dim, np.random.default_rng(seed))
    lhs = expm_unitary(h, t1) @ expm_unitary(h, t2)
    assert np.max(np.abs(lhs - expm_unitary(h, t1 + t2))) < 1e-9


def test_expm_matches_scipy_on_random():
    rng = np.random.default_rng(3)
    h = random_hermitian(10, rng, 2.0)
    np.testing.assert_allclose(expm_unitary(h, 1.3), scipy.linalg.expm(-1.3j * h), atol=1e-11)


def test_eig_diagonal():
    e = eig_general(np.diag([2.0, -1.0, 0.5j]))
    np.testing.assert_array_equal(e.eigenvalues, [2.0, -1.0, 0.5j])
    np.testing.assert_array_equal(e.right, np.eye(3))
    np.testing.assert_array_equal(e.left, np.eye(3))


def test_eig_hermitian_left_equals_right():
    h = random_hermitian(7, np.random.default_rng(0))
    e = eig_general(h)
    assert np.max(np.abs(e.eigenvalues.imag)) < 1e-10
    np.testing.assert_allclose(e.left, e.right, atol=1e-12)


def test_eig_jordan_block_is_defective():
    with pytest.raises(DefectiveMatrixError, match="defective"):
        eig_general([[1.0, 1.0], [0.0, 1.0]])


def test_eig_degenerate_non_normal_is_biorthogonal():
    # diagonalizable, non-normal, with a doubly degenerate eigenvalue
    s = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 2]], dtype=complex)
    a = s @ np.diag([0.5, 0.5, 0.2]) @ np.linalg.inv(s)
    e = eig_general(a)
    np.testing.assert_allclose(e.left.conj().T @ e.right, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(a @ e.right, e.right * e.eigenvalues, atol=1e-10)
    np.testing.assert_allclose(e.left.conj().T @ a, e.eigenvalues[:, None] * e.left.conj().T, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_eig_reconstruction_random(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    e = eig_general(a)
    recon = sum(g * np.outer(e.right[:, k], e.left[:, k].conj()) for k, g in enumerate(e.eigenvalues))
    assert np.max(np.abs(recon - a)) < 1e-8
    np.testing.assert_allclose(e.left.conj().T @ e.right, np.eye(dim), atol=1e-8)
