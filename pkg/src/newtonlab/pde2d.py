"""
Five-point finite differences for ``Laplace(u) + u^3 = 0`` on the unit
square with ``u = 0`` on the boundary.

Unknowns are the ``(n - 1)^2`` interior nodal values, stored row-major with
the ``y`` index slow and the ``x`` index fast.  The residual is scaled by
``h^2`` so that the Jacobian is the plain stencil matrix

    F(u)_p  = 4 u_p - (sum of the four neighbours) - h^2 u_p^3
    F'(u)   = A - 3 h^2 diag(u^2)

which is symmetric for every ``u``.  Newton directions are computed with
conjugate gradients; away from the zero solution the Jacobian can be
indefinite, and CG then either still converges or the step is reported as
failed.

Initial guesses are the hill functions

    phi(x, y) = (x / (x + e))^k (y / (y + e))^j
                ((1 - x) / (1 - x + e))^(n - k) ((1 - y) / (1 - y + e))^(n - j)

with ``e = 1 / n``, scaled to nodal maximum ``|i|``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bvp1d import SolutionLabels1D
from .core import NonlinearProblem, SolverConfig
from .ensemble import flow_many, solve_many
from .linalg import SparseMatrix, cg_many

__all__ = [
    "Grid2D",
    "GridFunction2D",
    "HillParams",
    "PdeProblem",
    "SolutionLabels2D",
    "pde_residual",
    "pde_jacobian",
    "hill_function",
    "hill_initial_guess",
    "positive_solution",
    "classify_2d",
    "grid_integral",
]


@dataclass(frozen=True)
class Grid2D:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError("need n >= 3 subintervals per side")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def m(self):
        """Interior nodes per side."""
        return self.n - 1

    @property
    def size(self):
        return (self.n - 1) ** 2

    def coordinates(self):
        """Interior node coordinates ``(x, y)`` as ``(m, m)`` arrays."""
        t = np.arange(1, self.n) / self.n
        y, x = np.meshgrid(t, t, indexing="ij")
        return x, y


@dataclass(frozen=True)
class GridFunction2D:
    grid: Grid2D
    interior_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.interior_values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} interior values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "interior_values", v)

    def as_array(self):
        """Interior values as an ``(m, m)`` array indexed ``[y, x]``."""
        m = self.grid.m
        return self.interior_values.reshape(m, m)

    def nodal_values(self):
        """All ``(n + 1)^2`` nodal values including the zero boundary."""
        return np.pad(self.as_array(), 1)

    def __neg__(self):
        return GridFunction2D(self.grid, -self.interior_values)


def _values(u):
    if isinstance(u, GridFunction2D):
        return u.interior_values, u.grid
    v = np.asarray(u, dtype=float)
    m = int(round(np.sqrt(v.shape[-1])))
    if m * m != v.shape[-1]:
        raise ValueError("state length is not a square number")
    return v, Grid2D(m + 1)


def _stencil(v, m):
    """``4 v - neighbours`` on stacks of flattened ``(m, m)`` grids."""
    g = v.reshape(v.shape[:-1] + (m, m))
    out = 4.0 * g
    out[..., 1:, :] -= g[..., :-1, :]
    out[..., :-1, :] -= g[..., 1:, :]
    out[..., :, 1:] -= g[..., :, :-1]
    out[..., :, :-1] -= g[..., :, 1:]
    return out.reshape(v.shape)


def pde_residual(u):
    """Scaled residual ``4 u_p - sum(neighbours) - h^2 u_p^3``.

    Accepts a :class:`GridFunction2D` or raw interior values; extra leading
    axes are treated as a stack.
    """
    v, grid = _values(u)
    h2 = grid.h * grid.h
    return _stencil(v, grid.m) - h2 * v * v * v


@lru_cache(maxsize=16)
def _laplacian_pattern(m):
    idx = np.arange(m * m).reshape(m, m)
    rows, cols = [], []
    for dr, dc in ((-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)):
        r0, r1 = max(0, -dr), m - max(0, dr)
        c0, c1 = max(0, -dc), m - max(0, dc)
        rows.append(idx[r0:r1, c0:c1].ravel())
        cols.append(idx[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel())
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=m * m))])
    values = np.where(rows == cols, 4.0, -1.0)
    return indptr, cols, values


def pde_jacobian(u):
    """Stencil matrix minus ``3 h^2 diag(u^2)`` in compressed rows."""
    v, grid = _values(u)
    v = v.reshape(-1)
    m = grid.m
    indptr, cols, values = _laplacian_pattern(m)
    values = values.copy()
    rows = np.repeat(np.arange(m * m), np.diff(indptr))
    diag = rows == cols
    values[diag] -= 3.0 * grid.h * grid.h * v * v
    return SparseMatrix(m * m, indptr, cols, values)


def grid_integral(v, h):
    """``h^2 * sum(v)`` over the last axis (exact for the bilinear interpolant)."""
    return h * h * np.sum(np.asarray(v, dtype=float), axis=-1)


# ---------------------------------------------------------------------------
# hill-shaped initial guesses

@dataclass(frozen=True)
class HillParams:
    """Hill centre indices ``k, j`` in 1..n-1, grid parameter ``n``, amplitude ``i``."""

    k: int
    j: int
    n: int
    i: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        for name in ("k", "j"):
            value = getattr(self, name)
            if not 1 <= value <= self.n - 1:
                raise IndexError(f"{name}={value} outside 1..{self.n - 1}")

    @property
    def eps(self):
        return 1.0 / self.n


def _hill(k, j, n, x, y):
    e = 1.0 / n
    with np.errstate(divide="ignore", invalid="ignore"):
        fx = (x / (x + e)) ** k * ((1.0 - x) / (1.0 - x + e)) ** (n - k)
        fy = (y / (y + e)) ** j * ((1.0 - y) / (1.0 - y + e)) ** (n - j)
    return fx * fy


def hill_function(p, x, y):
    """Evaluate the hill ``phi_(k, j, n)`` at ``(x, y)`` in the unit square."""
    return _hill(p.k, p.j, p.n, np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _hill_guesses(grid, k, j, n, amplitude):
    """Stack of scaled hills; ``k, j, amplitude`` broadcast together."""
    k, j, amplitude = np.broadcast_arrays(np.asarray(k), np.asarray(j),
                                          np.asarray(amplitude, dtype=float))
    t = np.arange(1, grid.n) / grid.n
    e = 1.0 / n
    # the hill factorises, so build the 1-D profiles and take outer products
    ax = np.log(t / (t + e))
    bx = np.log((1.0 - t) / (1.0 - t + e))
    px = np.exp(k.reshape(-1, 1) * ax + (n - k).reshape(-1, 1) * bx)
    py = np.exp(j.reshape(-1, 1) * ax + (n - j).reshape(-1, 1) * bx)
    px /= px.max(axis=1, keepdims=True)
    py /= py.max(axis=1, keepdims=True)
    out = amplitude.reshape(-1, 1, 1) * py[:, :, None] * px[:, None, :]
    return out.reshape(k.shape + (grid.size,))


def hill_initial_guess(p, grid=None):
    """``i * phi / max(phi)`` sampled at the interior nodes.

    The sup norm of ``phi`` is approximated by its largest nodal value, so
    the nodal maximum of the guess is exactly ``|i|``.
    """
    grid = Grid2D(p.n) if grid is None else grid
    return GridFunction2D(grid, _hill_guesses(grid, p.k, p.j, p.n, p.i))


# ---------------------------------------------------------------------------
# classification and the positive solution

class SolutionLabels2D(SolutionLabels1D):
    """Integral labels for grid functions on the unit square."""

    def __init__(self, names, targets, h, tol=0.1):
        super().__init__(names, targets, tol)
        self.h = float(h)

    def probe_many(self, xs):
        return grid_integral(xs, self.h)[..., None]


@lru_cache(maxsize=8)
def _positive_solution(n):
    p = PdeProblem(n, labels=False)
    x0 = p.initial_guess(0.5, 4.0)
    traj = flow_many(p, x0[None], dt=1e-2, t_max=50.0, residual_stop=1e-8, nrt_stop=1e-4)
    polish = solve_many(p, traj.final, SolverConfig.classical(max_iters=20, update_tol=1e-12))
    u = polish.final[0]
    u.setflags(write=False)
    return u


def positive_solution(n):
    """The positive solution on the ``n x n`` grid.

    Computed by following the Newton flow from the centred hill with
    amplitude 4 and polishing with a few full Newton steps; cached per grid.
    """
    return GridFunction2D(Grid2D(n), _positive_solution(int(n)))


def _labels(n, tol):
    i_plus = float(grid_integral(_positive_solution(n), 1.0 / n))
    return SolutionLabels2D(["u0", "u+", "u-"], [0.0, i_plus, -i_plus], 1.0 / n, tol)


def classify_2d(u, tol=0.1):
    """``"u0"``, ``"u+"``, ``"u-"`` by discrete integral, or ``None``."""
    v, grid = _values(u)
    labels = _labels(grid.n, tol)
    label = int(labels.classify_many(v.reshape(1, -1))[0])
    return None if label < 0 else labels.names[label]


# ---------------------------------------------------------------------------
# problem object

class PdeProblem(NonlinearProblem):
    """Five-point discretisation on an ``n x n`` grid.

    The sampling plane is ``(x-position of the hill centre, amplitude)``
    with the ``y``-centre fixed at ``j`` (the middle row by default).
    """

    default_max_iters = 200
    family = "pde2d"
    kind = "cubic-pde"
    amplitude_range = (-8.0, 8.0)

    def __init__(self, n=32, j=None, tol=0.1, labels=True):
        self.grid = Grid2D(n)
        super().__init__(self.grid.size)
        self.j = n // 2 if j is None else int(j)
        if not 1 <= self.j <= n - 1:
            raise IndexError(f"j={self.j} outside 1..{n - 1}")
        self.name = f"{self.kind}:n={n}" + ("" if self.j == n // 2 else f",j={self.j}")
        self.rect = (1.0 / n, 1.0 - 1.0 / n) + self.amplitude_range
        if labels:
            self.catalog = _labels(n, tol)

    def as_function(self, x):
        return GridFunction2D(self.grid, x)

    def norm(self, v):
        return float(self.norm_many(np.asarray(v, dtype=float)[None])[0])

    def norm_many(self, vs):
        vs = np.asarray(vs, dtype=float)
        return self.grid.h * np.sqrt(np.sum(vs * vs, axis=-1))

    def residual(self, x):
        return pde_residual(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return pde_jacobian(np.asarray(x, dtype=float))

    def residual_many(self, xs):
        return pde_residual(np.asarray(xs, dtype=float))

    def residual_and_nrt_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        m, h2 = self.grid.m, self.grid.h ** 2
        res = pde_residual(xs)
        shift = 3.0 * h2 * xs * xs

        def apply(v, rows):
            return _stencil(v, m) - shift[rows] * v

        bad = ~np.all(np.isfinite(res), axis=1)
        rhs = np.where(bad[:, None], 0.0, -res)
        direction, failed = cg_many(apply, rhs)
        failed |= bad
        direction[failed] = np.nan
        return res, direction, failed

    def nrt_many(self, xs):
        _, direction, failed = self.residual_and_nrt_many(xs)
        return direction, failed

    def in_domain_many(self, xs):
        return np.ones(len(xs), dtype=bool)

    def node_index(self, s):
        k = np.rint(np.asarray(s, dtype=float) * self.grid.n).astype(np.int64)
        return np.clip(k, 1, self.grid.n - 1)

    def initial_guesses(self, s, amplitude):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), s.shape)
        return _hill_guesses(self.grid, self.node_index(s), self.j, self.grid.n, amplitude)

    def initial_guess(self, s, amplitude):
        return self.initial_guesses([s], [amplitude])[0]

    def reference_solutions(self):
        plus = np.array(_positive_solution(self.grid.n))
        return {"u0": np.zeros(self.dim), "u+": plus, "u-": -plus}

    def extremal_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        k = np.argmax(np.abs(xs), axis=-1)
        return np.take_along_axis(xs, k[..., None], axis=-1)[..., 0]
