"""
Piecewise-linear finite elements for two-point problems ``u'' + f(u) = 0``
on (0, 1) with ``u(0) = u(1) = 0``.

The discrete residual for interior hat function ``phi_i`` is

    F_i(u) = int u' phi_i' dx - int f(u) phi_i dx

with the stiffness part assembled exactly and the source term integrated by
3-point Gauss-Legendre on every element (exact for ``f(u) = u^3``).  The
Jacobian is symmetric tridiagonal.  Two sources are provided:

* ``u^3``        -- solutions u_0 = 0, u_+ > 0 and u_- = -u_+
* ``exp(u + 1)`` -- the Bratu problem with exactly two solutions

Coefficient vectors hold the ``n - 1`` interior nodal values; all helpers
accept extra leading axes so stacks of states are assembled in one call.
"""
import copy
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import NonlinearProblem, SolverConfig, solve
from .linalg import TridiagonalMatrix, thomas_many

__all__ = [
    "Mesh1D",
    "FemFunction",
    "SolutionLabels1D",
    "CubicBVP",
    "BratuBVP",
    "cubic_bvp_residual",
    "cubic_bvp_jacobian",
    "bratu_residual",
    "bratu_jacobian",
    "bratu_theta_roots",
    "bratu_exact",
    "hat_initial_guess",
    "integral_value",
    "classify_1d",
    "cubic_labels",
    "bratu_labels",
    "l2_norm",
    "coefficient_norm",
]

_GX = 0.5 + np.array([-0.5, 0.0, 0.5]) * math.sqrt(0.6)
_GW = np.array([5.0, 8.0, 5.0]) / 18.0
_LEFT = 1.0 - _GX
_RIGHT = _GX
# weights for the element load vector and the element "mass" integrals
_WL, _WR = _GW * _LEFT, _GW * _RIGHT
_WLL, _WLR, _WRR = _GW * _LEFT * _LEFT, _GW * _LEFT * _RIGHT, _GW * _RIGHT * _RIGHT


@dataclass(frozen=True)
class Mesh1D:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("mesh needs at least two subintervals")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def nodes(self):
        return np.arange(self.n + 1) / self.n

    @property
    def interior(self):
        return self.nodes[1:-1]


@dataclass(frozen=True)
class FemFunction:
    mesh: Mesh1D
    interior_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.interior_values, dtype=float).ravel()
        if v.size != self.mesh.n - 1:
            raise ValueError(f"expected {self.mesh.n - 1} interior values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite nodal value")
        object.__setattr__(self, "interior_values", v)

    @property
    def nodal_values(self):
        return np.concatenate([[0.0], self.interior_values, [0.0]])

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.nodal_values)

    def __neg__(self):
        return FemFunction(self.mesh, -self.interior_values)


def _values(u):
    if isinstance(u, FemFunction):
        return u.interior_values, u.mesh.h
    u = np.asarray(u, dtype=float)
    return u, 1.0 / (u.shape[-1] + 1)


def _pad(v):
    width = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
    return np.pad(v, width)


def _at_gauss(v):
    """Values at the three quadrature points of every element, as a list."""
    full = _pad(v)
    left, right = full[..., :-1], full[..., 1:]
    return [left * _LEFT[g] + right * _RIGHT[g] for g in range(3)]


def _wsum(values, w):
    return values[0] * w[0] + values[1] * w[1] + values[2] * w[2]


def _stiffness_apply(v, h):
    full = _pad(v)
    return (2.0 * full[..., 1:-1] - full[..., :-2] - full[..., 2:]) / h


def _load(q, h):
    to_left, to_right = _wsum(q, h * _WL), _wsum(q, h * _WR)
    # node i collects the right end of element i-1 and the left end of element i
    return to_right[..., :-1] + to_left[..., 1:]


def _tridiag(dq, h):
    ll, lr, rr = _wsum(dq, h * _WLL), _wsum(dq, h * _WLR), _wsum(dq, h * _WRR)
    diag = 2.0 / h - (rr[..., :-1] + ll[..., 1:])
    off = -1.0 / h - lr[..., 1:-1]
    return off, diag


def _assemble_residual(v, h, source):
    return _stiffness_apply(v, h) - _load([source(g) for g in _at_gauss(v)], h)


def _assemble_jacobian(v, h, dsource):
    return _tridiag([dsource(g) for g in _at_gauss(v)], h)


def _cube(u):
    return u * u * u


def _cube_prime(u):
    return 3.0 * u * u


def _bratu_source(u):
    return np.exp(u + 1.0)


def cubic_bvp_residual(u):
    v, h = _values(u)
    return _assemble_residual(v, h, _cube)


def cubic_bvp_jacobian(u):
    v, h = _values(u)
    off, diag = _assemble_jacobian(v, h, _cube_prime)
    return TridiagonalMatrix(off, diag, off)


def bratu_residual(u):
    v, h = _values(u)
    return _assemble_residual(v, h, _bratu_source)


def bratu_jacobian(u):
    v, h = _values(u)
    off, diag = _assemble_jacobian(v, h, _bratu_source)
    return TridiagonalMatrix(off, diag, off)


def coefficient_norm(v):
    """Euclidean norm of nodal coefficients over the last axis."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1))


def l2_norm(v, h):
    """Discrete L2 norm ``sqrt(h * sum v_i^2)`` of nodal coefficients."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(h * np.sum(v * v, axis=-1))


def integral_value(u, h=None):
    """Exact integral of the P1 function with zero boundary values."""
    if isinstance(u, FemFunction):
        return float(u.mesh.h * np.sum(u.interior_values))
    v = np.asarray(u, dtype=float)
    if h is None:
        h = 1.0 / (v.shape[-1] + 1)
    return h * np.sum(v, axis=-1)


def _tents(n, i, alpha):
    """Interior values of tents with apex ``alpha`` at node ``i``."""
    j = np.arange(1, n)
    i = np.asarray(i, dtype=float)[..., None]
    shape = np.where(j <= i, j / i, (n - j) / (n - i))
    return np.asarray(alpha, dtype=float)[..., None] * shape


def hat_initial_guess(mesh, i, alpha):
    """Piecewise-linear guess: zero at both ends, ``alpha`` at node ``i``.

    The function is linear on [0, x_i] and on [x_i, 1], so its integral is
    ``alpha / 2`` wherever the apex sits.
    """
    if not 1 <= i <= mesh.n - 1:
        raise IndexError(f"node index {i} outside 1..{mesh.n - 1}")
    return FemFunction(mesh, _tents(mesh.n, i, alpha))


# ---------------------------------------------------------------------------
# Bratu closed form

def _theta_gap(theta):
    return theta - math.sqrt(2.0 * math.e) * math.cosh(theta / 4.0)


@lru_cache(maxsize=None)
def bratu_theta_roots(tol=1e-12):
    """Both solutions of ``theta = sqrt(2e) cosh(theta / 4)``.

    Sign changes are located on the integers 0..20 and refined by bisection
    until the bracket is narrower than ``tol``.
    """
    found = []
    for k in range(20):
        lo, hi = float(k), float(k + 1)
        glo, ghi = _theta_gap(lo), _theta_gap(hi)
        if glo == 0.0:
            found.append(lo)
            continue
        if (glo < 0) == (ghi < 0):
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            gm = _theta_gap(mid)
            if (gm < 0) == (glo < 0):
                lo, glo = mid, gm
            else:
                hi = mid
        found.append(0.5 * (lo + hi))
    if len(found) != 2:
        raise RuntimeError(f"expected two roots, found {len(found)}")
    return tuple(found)


def bratu_exact(x, theta):
    """``-2 ln(cosh((x - 1/2) theta / 2) / cosh(theta / 4))``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    x = np.asarray(x, dtype=float)
    return -2.0 * np.log(np.cosh((x - 0.5) * theta / 2.0) / math.cosh(theta / 4.0))


def _exact_integral(theta, order=64):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * float(np.sum(weights * bratu_exact(0.5 * (nodes + 1.0), theta)))


# ---------------------------------------------------------------------------
# classification by integral value

class SolutionLabels1D:
    """Solutions identified by their integrals over (0, 1).

    A state is given the label whose target integral is nearest, provided it
    is within ``tol``; otherwise it stays unclassified (-1).

    ``error_targets`` (default: ``targets``) are the values that iteration
    errors are measured against.  For a discretised problem these should be
    the integrals of the discrete solutions, otherwise every error sequence
    levels off at the discretisation error.
    """

    def __init__(self, names, targets, tol=0.1, error_targets=None):
        self.names = list(names)
        self.targets = np.asarray(targets, dtype=float)
        self.tol = float(tol)
        self.error_targets = (self.targets if error_targets is None
                              else np.asarray(error_targets, dtype=float))
        gaps = np.abs(self.targets[:, None] - self.targets[None])
        gaps[np.diag_indices(len(self.targets))] = np.inf
        if gaps.min() <= 2 * self.tol:
            raise ValueError("targets closer than twice the tolerance")

    def __len__(self):
        return len(self.names)

    def probe_many(self, xs):
        return integral_value(np.asarray(xs, dtype=float))[..., None]

    def classify_probe(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        d = np.abs(values[:, None] - self.targets[None])
        nearest = np.argmin(np.where(np.isnan(d), np.inf, d), axis=1)
        hit = d[np.arange(values.size), nearest] <= self.tol
        return np.where(hit, nearest, -1)

    def classify_many(self, xs):
        return self.classify_probe(self.probe_many(xs))

    def classify(self, x):
        label = int(self.classify_many(np.asarray(x, dtype=float)[None])[0])
        return None if label < 0 else self.names[label]

    def with_error_targets(self, values):
        out = copy.copy(self)
        out.error_targets = np.asarray(values, dtype=float)
        return out

    def errors(self, history, label):
        # distance to the nearest target integral at every iterate
        values = np.asarray(history, dtype=float)[..., 0]
        return np.min(np.abs(values[..., None] - self.error_targets), axis=-1)

    def plane_points(self):
        return []


def cubic_labels(tol=0.1):
    i_plus = math.pi / math.sqrt(2.0)
    return SolutionLabels1D(["u0", "u+", "u-"], [0.0, i_plus, -i_plus], tol)


@lru_cache(maxsize=None)
def bratu_labels(tol=0.1):
    t1, t2 = bratu_theta_roots()
    return SolutionLabels1D(["u1", "u2"], [_exact_integral(t1), _exact_integral(t2)], tol)


def classify_1d(u, labels, tol=None):
    """Name of the solution ``u`` is closest to in integral, or ``None``."""
    if tol is not None and tol != labels.tol:
        labels = SolutionLabels1D(labels.names, labels.targets, tol)
    v, _ = _values(u)
    label = int(labels.classify_many(v[None])[0])
    return None if label < 0 else labels.names[label]


# ---------------------------------------------------------------------------
# problem objects

class _FemProblem(NonlinearProblem):
    default_max_iters = 200
    family = "bvp1d"

    def __init__(self, n=100):
        self.mesh = Mesh1D(n)
        super().__init__(n - 1)
        self.name = f"{self.kind}:n={n}"
        self.rect = (self.mesh.h, 1.0 - self.mesh.h) + self.amplitude_range

    def as_function(self, x):
        return FemFunction(self.mesh, x)

    # Step control and stopping use the Euclidean norm of the nodal
    # coefficients.  It is sqrt(n) times the discrete L2 norm, so a given
    # tau damps more on finer meshes.
    def norm(self, v):
        return float(coefficient_norm(v))

    def norm_many(self, vs):
        return coefficient_norm(vs)

    def residual(self, x):
        return _assemble_residual(np.asarray(x, dtype=float), self.mesh.h, self._f)

    def jacobian(self, x):
        off, diag = _assemble_jacobian(np.asarray(x, dtype=float), self.mesh.h, self._df)
        return TridiagonalMatrix(off, diag, off)

    def residual_many(self, xs):
        return _assemble_residual(np.asarray(xs, dtype=float), self.mesh.h, self._f)

    def residual_and_nrt_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        h = self.mesh.h
        gauss = _at_gauss(xs)
        res = _stiffness_apply(xs, h) - _load([self._f(g) for g in gauss], h)
        off, diag = _tridiag([self._df(g) for g in gauss], h)
        direction, failed = thomas_many(off, diag, off, -res)
        failed |= ~np.all(np.isfinite(res), axis=1) | ~np.all(np.isfinite(diag), axis=1)
        return res, direction, failed

    def nrt_many(self, xs):
        _, direction, failed = self.residual_and_nrt_many(xs)
        return direction, failed

    def in_domain_many(self, xs):
        return np.ones(len(xs), dtype=bool)

    def node_index(self, s):
        """Nearest interior node to position ``s`` (clamped)."""
        i = np.rint(np.asarray(s, dtype=float) * self.mesh.n).astype(np.int64)
        return np.clip(i, 1, self.mesh.n - 1)

    def initial_guesses(self, s, alpha):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), s.shape)
        return _tents(self.mesh.n, self.node_index(s), alpha)

    def initial_guess(self, s, alpha):
        return hat_initial_guess(self.mesh, int(self.node_index(s)), alpha).interior_values

    def _discrete_errors(self, labels):
        refs = self.reference_solutions()
        return labels.with_error_targets([integral_value(refs[k]) for k in labels.names])

    def extremal_many(self, xs):
        """Signed nodal value of largest magnitude."""
        xs = np.asarray(xs, dtype=float)
        k = np.argmax(np.abs(xs), axis=-1)
        return np.take_along_axis(xs, k[..., None], axis=-1)[..., 0]


class CubicBVP(_FemProblem):
    """``u'' + u^3 = 0``, hat initial guesses with amplitudes in [-4, 4]."""

    kind = "cubic-bvp"
    amplitude_range = (-4.0, 4.0)
    _f = staticmethod(_cube)
    _df = staticmethod(_cube_prime)

    def __init__(self, n=100, tol=0.1):
        super().__init__(n)
        self.catalog = self._discrete_errors(cubic_labels(tol))

    def reference_solutions(self):
        """Discrete ``u0``, ``u+`` and ``u-`` as interior value arrays."""
        if not hasattr(self, "_refs"):
            start = self.initial_guess(0.5, 3.0)
            plus = solve(self, start, SolverConfig.adaptive(0.1, max_iters=200, update_tol=1e-12)).final
            self._refs = {"u0": np.zeros(self.dim), "u+": plus, "u-": -plus}
        return self._refs


class BratuBVP(_FemProblem):
    """``u'' + exp(u + 1) = 0``, hat initial guesses with amplitudes in [0, 3]."""

    kind = "bratu"
    amplitude_range = (0.0, 3.0)
    _f = staticmethod(_bratu_source)
    _df = staticmethod(_bratu_source)

    def __init__(self, n=100, tol=0.1):
        super().__init__(n)
        self.catalog = self._discrete_errors(bratu_labels(tol))

    def reference_solutions(self):
        """Discrete ``u1`` and ``u2``, Newton-polished from the exact solutions."""
        if not hasattr(self, "_refs"):
            cfg = SolverConfig.classical(max_iters=50, update_tol=1e-12)
            x = self.mesh.interior
            self._refs = {name: solve(self, bratu_exact(x, theta), cfg).final
                          for name, theta in zip(("u1", "u2"), bratu_theta_roots())}
        return self._refs
