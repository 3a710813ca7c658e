"""
Small linear solvers used to compute Newton updates.

Three matrix containers are provided (dense, tridiagonal, compressed sparse
row) together with one solver each.  Every solver also has a ``*_many``
form that works on a stack of independent systems at once; the basin
sampler relies on those to keep thousands of Newton iterations in lockstep.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PIVOT_TOL",
    "LinAlgError",
    "SingularMatrix",
    "NoConvergence",
    "DenseMatrix",
    "TridiagonalMatrix",
    "SparseMatrix",
    "solve_dense",
    "solve_tridiagonal",
    "solve_sparse_spd",
    "solve",
    "matvec",
    "solve_dense_many",
    "thomas_many",
    "cg_many",
]

#: pivots with smaller magnitude are treated as exact zeros
PIVOT_TOL = 1e-14


class LinAlgError(ArithmeticError):
    pass


class SingularMatrix(LinAlgError):
    """A pivot fell below :data:`PIVOT_TOL`."""


class NoConvergence(LinAlgError):
    """Conjugate gradients hit its iteration cap."""


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class DenseMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.size == 0:
            raise ValueError("DenseMatrix needs a non-empty 2-d array")
        _finite("DenseMatrix", data)
        object.__setattr__(self, "data", data)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def to_dense(self):
        return self.data.copy()


@dataclass(frozen=True)
class TridiagonalMatrix:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, diag, upper = (np.asarray(a, dtype=float).ravel()
                              for a in (self.lower, self.diag, self.upper))
        n = diag.size
        if n == 0 or lower.size != n - 1 or upper.size != n - 1:
            raise ValueError("off-diagonals must have length n-1")
        for name, arr in (("lower", lower), ("diag", diag), ("upper", upper)):
            _finite(name, arr)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self):
        return self.diag.size

    def to_dense(self):
        return (np.diag(self.diag) + np.diag(self.lower, -1)
                + np.diag(self.upper, 1))

    def is_symmetric(self):
        return np.array_equal(self.lower, self.upper)


@dataclass(frozen=True)
class SparseMatrix:
    """Square matrix in compressed sparse row storage."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if self.n < 1 or indptr.shape != (self.n + 1,) or indptr[0] != 0:
            raise ValueError("indptr must have n+1 entries starting at 0")
        if np.any(np.diff(indptr) < 0) or indptr[-1] != indices.size:
            raise ValueError("indptr must be monotone and end at nnz")
        if values.size != indices.size:
            raise ValueError("indices and values differ in length")
        if indices.size and (indices.min() < 0 or indices.max() >= self.n):
            raise ValueError("column index out of range")
        for r in range(self.n):
            cols = indices[indptr[r]:indptr[r + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ValueError(f"columns of row {r} not strictly increasing")
        _finite("SparseMatrix", values)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dense(cls, a, drop=0.0):
        a = np.asarray(a, dtype=float)
        mask = np.abs(a) > drop
        indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))])
        rows, cols = np.nonzero(mask)
        return cls(a.shape[0], indptr, cols, a[rows, cols])

    def row_ids(self):
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def dot(self, x):
        x = np.asarray(x, dtype=float)
        return np.bincount(self.row_ids(), weights=self.values * x[self.indices],
                           minlength=self.n)

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        out[self.row_ids(), self.indices] = self.values
        return out

    def is_symmetric(self, tol=0.0):
        a = self.to_dense()
        return np.allclose(a, a.T, rtol=0.0, atol=tol)


# ---------------------------------------------------------------------------
# stacked kernels

def solve_dense_many(a, b):
    """Gaussian elimination with partial pivoting on a stack of systems.

    Parameters
    ----------
    a : ndarray, shape (m, n, n)
    b : ndarray, shape (m, n)

    Returns
    -------
    x : ndarray, shape (m, n)
        Solutions; rows whose elimination broke down are filled with NaN.
    failed : ndarray of bool, shape (m,)
        True where some pivot magnitude was below :data:`PIVOT_TOL`.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    m, n = b.shape
    rows = np.arange(m)
    failed = np.zeros(m, dtype=bool)
    for k in range(n):
        p = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            r, q = rows[swap], p[swap]
            a[r, k], a[r, q] = a[r, q], a[r, k].copy()
            b[r, k], b[r, q] = b[r, q], b[r, k].copy()
        piv = a[:, k, k]
        bad = np.abs(piv) < PIVOT_TOL
        failed |= bad
        piv = np.where(bad, 1.0, piv)
        if k + 1 < n:
            f = a[:, k + 1:, k] / piv[:, None]
            a[:, k + 1:, k:] -= f[:, :, None] * a[:, None, k, k:]
            b[:, k + 1:] -= f * b[:, k, None]
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        piv = np.where(failed, 1.0, a[:, k, k])
        acc = b[:, k] - np.sum(a[:, k, k + 1:] * x[:, k + 1:], axis=1)
        x[:, k] = acc / piv
    x[failed] = np.nan
    return x, failed


def thomas_many(lower, diag, upper, b):
    """Thomas elimination on a stack of tridiagonal systems.

    ``lower`` and ``upper`` have shape (m, n-1), ``diag`` and ``b`` shape
    (m, n).  Returns ``(x, failed)`` like :func:`solve_dense_many`.
    """
    # work in (n, m) layout so each sweep step touches contiguous memory
    lo = np.ascontiguousarray(np.asarray(lower, dtype=float).T)
    di = np.ascontiguousarray(np.asarray(diag, dtype=float).T)
    up = np.ascontiguousarray(np.asarray(upper, dtype=float).T)
    rhs = np.ascontiguousarray(np.asarray(b, dtype=float).T)
    n, m = di.shape
    failed = np.zeros(m, dtype=bool)
    cp = np.empty((max(n - 1, 0), m))
    dp = np.empty((n, m))
    beta = di[0].copy()
    for i in range(n):
        if i > 0:
            beta = di[i] - lo[i - 1] * cp[i - 1]
        bad = np.abs(beta) < PIVOT_TOL
        failed |= bad
        beta = np.where(bad, 1.0, beta)
        if i < n - 1:
            cp[i] = up[i] / beta
        dp[i] = rhs[i] / beta if i == 0 else (rhs[i] - lo[i - 1] * dp[i - 1]) / beta
    x = np.empty((n, m))
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    x = x.T.copy()
    x[failed] = np.nan
    return x, failed


def cg_many(apply, b, tol=1e-10, maxiter=None):
    """Conjugate gradients on a stack of symmetric systems.

    Parameters
    ----------
    apply : callable
        ``apply(v, rows)`` returns the products ``A_r v_r`` for the system
        indices ``rows`` (the operator may differ per system).
    b : ndarray, shape (m, n)
    tol : float
        Relative residual target ``||r|| <= tol * ||b||``.
    maxiter : int, optional
        Defaults to ``10 * n``.

    Returns
    -------
    x, failed
        ``failed`` marks systems that hit the cap or broke down.
    """
    b = np.asarray(b, dtype=float)
    m, n = b.shape
    if maxiter is None:
        maxiter = 10 * n
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.sum(r * r, axis=1)
    target = (tol * np.sqrt(np.sum(b * b, axis=1))) ** 2
    done = rr <= target
    failed = np.zeros(m, dtype=bool)
    for _ in range(maxiter):
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        pa = p[act]
        ap = apply(pa, act)
        pap = np.sum(pa * ap, axis=1)
        broke = ~np.isfinite(pap) | (np.abs(pap) <= 1e-300)
        failed[act[broke]] = True
        keep = ~broke
        act, pa, ap, pap = act[keep], pa[keep], ap[keep], pap[keep]
        alpha = rr[act] / pap
        x[act] += alpha[:, None] * pa
        r_new = r[act] - alpha[:, None] * ap
        rr_new = np.sum(r_new * r_new, axis=1)
        beta = rr_new / rr[act]
        r[act] = r_new
        p[act] = r_new + beta[:, None] * pa
        rr[act] = rr_new
        done[act] = rr_new <= target[act]
    failed |= ~done
    x[failed] = np.nan
    return x, failed


# ---------------------------------------------------------------------------
# single-system front ends

def _check_rhs(n, b):
    b = np.asarray(b, dtype=float).ravel()
    if b.size != n:
        raise ValueError(f"right-hand side has length {b.size}, expected {n}")
    return b


def solve_dense(a, b):
    """Solve ``A x = b`` by partial pivoting; raise :class:`SingularMatrix`."""
    if not isinstance(a, DenseMatrix):
        a = DenseMatrix(a)
    if a.rows != a.cols:
        raise ValueError("matrix must be square")
    b = _check_rhs(a.rows, b)
    if a.rows <= _SMALL:
        return _solve_small(a.data.tolist(), b.tolist())
    x, failed = solve_dense_many(a.data[None], b[None])
    if failed[0]:
        raise SingularMatrix("pivot below threshold")
    return x[0]


_SMALL = 4


def _solve_small(a, b):
    # same operations as solve_dense_many, on Python floats; numpy call
    # overhead dominates for tiny systems
    n = len(b)
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(a[i][k]))
        if p != k:
            a[k], a[p] = a[p], a[k]
            b[k], b[p] = b[p], b[k]
        piv = a[k][k]
        if abs(piv) < PIVOT_TOL:
            raise SingularMatrix("pivot below threshold")
        for i in range(k + 1, n):
            f = a[i][k] / piv
            for j in range(k, n):
                a[i][j] -= f * a[k][j]
            b[i] -= f * b[k]
    x = [0.0] * n
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - sum(a[k][j] * x[j] for j in range(k + 1, n))) / a[k][k]
    return np.array(x)


def solve_tridiagonal(t, b):
    """Solve ``T x = b`` by Thomas elimination; raise :class:`SingularMatrix`."""
    b = _check_rhs(t.n, b)
    x, failed = thomas_many(t.lower[None], t.diag[None], t.upper[None], b[None])
    if failed[0]:
        raise SingularMatrix("pivot breakdown in Thomas sweep")
    return x[0]


def solve_sparse_spd(a, b, tol=1e-10):
    """Conjugate-gradient solve with relative residual ``tol``.

    Capped at ``10 * n`` iterations; raises :class:`NoConvergence` when the
    cap is hit, which in practice means the matrix was not definite.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = _check_rhs(a.n, b)
    x, failed = cg_many(lambda v, rows: a.dot(v[0])[None], b[None], tol=tol)
    if failed[0]:
        raise NoConvergence(f"CG did not reach tol={tol} in {10 * a.n} steps")
    return x[0]


def solve(a, b):
    """Dispatch to the solver that matches the matrix container."""
    if isinstance(a, TridiagonalMatrix):
        return solve_tridiagonal(a, b)
    if isinstance(a, SparseMatrix):
        return solve_sparse_spd(a, b)
    return solve_dense(a, b)


def matvec(a, x):
    if isinstance(a, SparseMatrix):
        return a.dot(x)
    if isinstance(a, TridiagonalMatrix):
        x = np.asarray(x, dtype=float)
        y = a.diag * x
        y[:-1] += a.upper * x[1:]
        y[1:] += a.lower * x[:-1]
        return y
    data = a.data if isinstance(a, DenseMatrix) else np.asarray(a, dtype=float)
    return data @ np.asarray(x, dtype=float)
