import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from newtonlab import linalg
from newtonlab.linalg import (
    DenseMatrix,
    NoConvergence,
    SingularMatrix,
    SparseMatrix,
    TridiagonalMatrix,
    cg_many,
    solve_dense,
    solve_sparse_spd,
    solve_tridiagonal,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def laplacian_2d(m):
    """Dense 5-point Laplacian (unscaled) on an m x m interior grid."""
    n = m * m
    a = np.zeros((n, n))
    for r in range(m):
        for c in range(m):
            i = r * m + c
            a[i, i] = 4.0
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < m and 0 <= cc < m:
                    a[i, rr * m + cc] = -1.0
    return a


# -- containers -------------------------------------------------------------

def test_dense_rejects_non_finite():
    with pytest.raises(ValueError):
        DenseMatrix([[1.0, np.nan], [0.0, 1.0]])


def test_tridiagonal_length_check():
    with pytest.raises(ValueError):
        TridiagonalMatrix([1.0, 1.0], [1.0, 2.0], [1.0])


def test_sparse_requires_increasing_columns():
    with pytest.raises(ValueError):
        SparseMatrix(2, [0, 2, 3], [1, 0, 1], [1.0, 2.0, 3.0])


def test_sparse_roundtrip():
    a = laplacian_2d(3)
    s = SparseMatrix.from_dense(a)
    assert np.array_equal(s.to_dense(), a)
    assert s.is_symmetric()
    x = np.arange(9.0)
    assert np.allclose(s.dot(x), a @ x)


# -- dense ------------------------------------------------------------------

def test_dense_identity():
    assert np.array_equal(solve_dense(DenseMatrix(np.eye(2)), [3.0, -1.0]), [3.0, -1.0])


def test_dense_diagonal():
    x = solve_dense(DenseMatrix([[2.0, 0.0], [0.0, 4.0]]), [2.0, 8.0])
    assert np.allclose(x, [1.0, 2.0], atol=1e-15)


def test_dense_zero_matrix_is_singular():
    with pytest.raises(SingularMatrix):
        solve_dense(DenseMatrix(np.zeros((2, 2))), [1.0, 1.0])


def test_dense_needs_pivoting():
    x = solve_dense(DenseMatrix([[0.0, 1.0], [1.0, 0.0]]), [2.0, 3.0])
    assert np.array_equal(x, [3.0, 2.0])


def test_dense_shape_mismatch():
    with pytest.raises(ValueError):
        solve_dense(DenseMatrix(np.eye(2)), [1.0, 2.0, 3.0])


@given(arrays(float, (4, 4), elements=finite), arrays(float, 4, elements=finite))
def test_dense_residual_bound(a, b):
    a = a + 10.0 * np.eye(4)  # keep the pivots away from zero
    x = solve_dense(DenseMatrix(a), b)
    assert np.linalg.norm(a @ x - b) <= 1e-12 * max(1.0, np.linalg.norm(b)) * 10


# -- tridiagonal ------------------------------------------------------------

def test_tridiagonal_identity():
    t = TridiagonalMatrix(np.zeros(2), np.ones(3), np.zeros(2))
    assert np.array_equal(solve_tridiagonal(t, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_tridiagonal_hand_elimination():
    t = TridiagonalMatrix([-1.0], [2.0, 2.0], [-1.0])
    assert np.allclose(solve_tridiagonal(t, [1.0, 0.0]), [2 / 3, 1 / 3], atol=1e-15)


def test_tridiagonal_zero_pivot_chain():
    t = TridiagonalMatrix([1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0])
    with pytest.raises(SingularMatrix):
        solve_tridiagonal(t, [1.0, 1.0, 1.0])


@given(st.integers(2, 12), st.data())
def test_tridiagonal_agrees_with_dense(n, data):
    lo = data.draw(arrays(float, n - 1, elements=finite))
    up = data.draw(arrays(float, n - 1, elements=finite))
    d = data.draw(arrays(float, n, elements=finite))
    d = d + np.sign(d + 0.5) * (np.abs(np.r_[lo, 0]) + np.abs(np.r_[0, up]) + 1.0)
    b = data.draw(arrays(float, n, elements=finite))
    t = TridiagonalMatrix(lo, d, up)
    x_t = solve_tridiagonal(t, b)
    x_d = solve_dense(DenseMatrix(t.to_dense()), b)
    assert np.allclose(x_t, x_d, atol=1e-10, rtol=0)
    assert np.linalg.norm(t.to_dense() @ x_t - b) <= 1e-10 * max(1.0, np.linalg.norm(b))


def test_thomas_many_flags_only_bad_rows():
    lower = np.array([[1.0], [1.0]])
    diag = np.array([[2.0, 2.0], [0.0, 0.0]])
    upper = np.array([[1.0], [1.0]])
    x, failed = linalg.thomas_many(lower, diag, upper, np.ones((2, 2)))
    assert failed.tolist() == [False, True]
    assert np.allclose(x[0], [1 / 3, 1 / 3])


# -- conjugate gradients ----------------------------------------------------

def test_cg_identity():
    b = np.array([1.0, -2.0, 3.5])
    assert np.allclose(solve_sparse_spd(SparseMatrix.from_dense(np.eye(3)), b), b)


def test_cg_scaled_identity():
    x = solve_sparse_spd(SparseMatrix.from_dense(2 * np.eye(5)), np.full(5, 4.0))
    assert np.allclose(x, 2.0)


def test_cg_laplacian_center_source():
    a = laplacian_2d(3)
    b = np.zeros(9)
    b[4] = 1.0
    x = solve_sparse_spd(SparseMatrix.from_dense(a), b)
    ref = solve_dense(DenseMatrix(a), b)
    assert np.allclose(x, ref, atol=1e-10)
    assert x[4] == max(x)  # centre-weighted
    assert np.allclose(x.reshape(3, 3), x.reshape(3, 3).T)


def test_cg_indefinite_stalls():
    a = np.diag([1.0, -1.0])
    # b orthogonal to nothing: r.Ar = 0 on the first step
    with pytest.raises(NoConvergence):
        solve_sparse_spd(SparseMatrix.from_dense(a), np.array([1.0, 1.0]))


@given(st.integers(1, 20), st.data())
def test_cg_agrees_with_dense_on_spd(n, data):
    g = data.draw(arrays(float, (n, n), elements=st.floats(-1, 1)))
    a = g @ g.T + n * np.eye(n)
    b = data.draw(arrays(float, n, elements=finite))
    x = solve_sparse_spd(SparseMatrix.from_dense(a), b)
    ref = np.linalg.solve(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * max(np.linalg.norm(b), 1e-300) * 1.0001
    assert np.allclose(x, ref, atol=1e-8 * max(1.0, np.abs(ref).max()))


def test_cg_agrees_with_dense_dimension_64():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((64, 64))
    a = g @ g.T + 64 * np.eye(64)
    b = rng.standard_normal(64)
    x = solve_sparse_spd(SparseMatrix.from_dense(a), b, tol=1e-12)
    assert np.allclose(x, np.linalg.solve(a, b), atol=1e-10)


def test_cg_many_independent_rows():
    a = laplacian_2d(4)
    b = np.stack([np.ones(16), np.arange(16.0), np.zeros(16)])
    x, failed = cg_many(lambda v, rows: v @ a.T, b)
    assert not failed.any()
    assert np.allclose(x[2], 0.0)
    for k in range(2):
        assert np.allclose(a @ x[k], b[k], atol=1e-9 * np.linalg.norm(b[k]))


def test_generic_solve_dispatch():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    ref = np.linalg.solve(a, b)
    assert np.allclose(linalg.solve(DenseMatrix(a), b), ref)
    assert np.allclose(linalg.solve(TridiagonalMatrix([1.0], [4.0, 3.0], [1.0]), b), ref)
    assert np.allclose(linalg.solve(SparseMatrix.from_dense(a), b), ref)
