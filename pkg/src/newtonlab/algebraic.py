"""
Two algebraic test systems in the plane.

``cubic``   z^3 - 2z - 4 over the complex numbers, written as a real 2-vector.
            Zeros at 2 and -1 +- i; the derivative vanishes at +-sqrt(2/3).
``expsin``  (exp(x^2 + y^2) - 3, x + y - sin(3(x + y))), sampled on
            [-1.5, 1.5]^2 where it has six zeros.  Its Jacobian is singular
            on y = x and on a family of lines x + y = const.
"""
import math
from functools import lru_cache

import numpy as np

from .core import NonlinearProblem
from .linalg import DenseMatrix, solve_dense_many

__all__ = [
    "RootCatalog",
    "CubicProblem",
    "ExpSinProblem",
    "cubic_residual",
    "cubic_jacobian",
    "expsin_residual",
    "expsin_jacobian",
    "expsin_roots",
    "expsin_singular_offsets",
    "expsin_singular_distance",
    "EXPSIN_BOX",
]

EXPSIN_BOX = (-1.5, 1.5, -1.5, 1.5)


class RootCatalog:
    """Known zeros of a planar problem, used to label converged states.

    A state is matched to the nearest root when it lies within
    ``match_radius`` of it; otherwise it is left unlabelled (-1).
    """

    def __init__(self, roots, match_radius=1e-3):
        self.names = [str(name) for name, _ in roots]
        self.points = np.array([np.asarray(pt, dtype=float) for _, pt in roots])
        self.match_radius = float(match_radius)
        gaps = np.linalg.norm(self.points[:, None] - self.points[None], axis=-1)
        gaps[np.diag_indices(len(self.points))] = np.inf
        if gaps.min() <= 2 * self.match_radius:
            raise ValueError("roots closer than twice the match radius")

    def __len__(self):
        return len(self.names)

    def probe_many(self, xs):
        return np.asarray(xs, dtype=float)

    def classify_probe(self, values):
        values = np.asarray(values, dtype=float).reshape(-1, self.points.shape[1])
        d = np.linalg.norm(values[:, None, :] - self.points[None], axis=-1)
        with np.errstate(invalid="ignore"):
            nearest = np.argmin(np.where(np.isnan(d), np.inf, d), axis=1)
        hit = d[np.arange(len(values)), nearest] <= self.match_radius
        return np.where(hit, nearest, -1)

    def classify_many(self, xs):
        return self.classify_probe(self.probe_many(xs))

    def classify(self, x):
        label = int(self.classify_many(np.asarray(x, dtype=float)[None])[0])
        return None if label < 0 else self.names[label]

    def errors(self, history, label):
        """Distances of a probe history ``(n, dim)`` to root ``label``."""
        return np.linalg.norm(np.asarray(history) - self.points[label], axis=-1)

    def plane_points(self):
        return [tuple(pt) for pt in self.points]


# ---------------------------------------------------------------------------
# z^3 - 2z - 4

def cubic_residual(x):
    """Real and imaginary part of ``z^3 - 2z - 4`` at ``z = x[0] + i x[1]``.

    Works on any array whose last axis has length 2.
    """
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    re = a * a * a - 3.0 * a * b * b - 2.0 * a - 4.0
    im = 3.0 * a * a * b - b * b * b - 2.0 * b
    return np.stack([re, im], axis=-1)


def _cubic_jacobian_array(x):
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    # 3 z^2 - 2 = p + i q  acts on R^2 as [[p, -q], [q, p]]
    p = 3.0 * (a * a - b * b) - 2.0
    q = 6.0 * a * b
    return np.stack([np.stack([p, -q], -1), np.stack([q, p], -1)], -2)


def cubic_jacobian(x):
    return DenseMatrix(_cubic_jacobian_array(x))


class _PlanarProblem(NonlinearProblem):
    """Shared vectorised plumbing for the 2x2 systems."""

    rect = (-1.0, 1.0, -1.0, 1.0)
    family = "algebraic"

    def residual_many(self, xs):
        return self._residual(xs)

    def _nrt(self, xs):
        res = self._residual(xs)
        direction, failed = solve_dense_many(self._jac(xs), -res)
        return res, direction, failed

    def nrt_many(self, xs):
        _, direction, failed = self._nrt(xs)
        return direction, failed

    def residual_and_nrt_many(self, xs):
        return self._nrt(xs)

    def norm_many(self, vs):
        vs = np.asarray(vs, dtype=float)
        return np.sqrt(vs[:, 0] * vs[:, 0] + vs[:, 1] * vs[:, 1])

    def in_domain_many(self, xs):
        return np.ones(len(xs), dtype=bool)

    def initial_guesses(self, s, t):
        return np.stack([np.asarray(s, dtype=float), np.asarray(t, dtype=float)], axis=-1)

    def initial_guess(self, s, t):
        return np.array([s, t], dtype=float)


class CubicProblem(_PlanarProblem):
    name = "cubic"
    rect = (-5.0, 5.0, -5.0, 5.0)
    critical_points = ((math.sqrt(2 / 3), 0.0), (-math.sqrt(2 / 3), 0.0))

    def __init__(self):
        super().__init__(2)
        self.catalog = RootCatalog([("(2,0)", (2.0, 0.0)),
                                    ("(-1,1)", (-1.0, 1.0)),
                                    ("(-1,-1)", (-1.0, -1.0))])

    def residual(self, x):
        return cubic_residual(x)

    def jacobian(self, x):
        return cubic_jacobian(x)

    _residual = staticmethod(cubic_residual)
    _jac = staticmethod(_cubic_jacobian_array)


# ---------------------------------------------------------------------------
# exp / sin system

def expsin_residual(x):
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    s = a + b
    return np.stack([np.exp(a * a + b * b) - 3.0, s - np.sin(3.0 * s)], axis=-1)


def _expsin_jacobian_array(x):
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    e = np.exp(a * a + b * b)
    c = 1.0 - 3.0 * np.cos(3.0 * (a + b))
    return np.stack([np.stack([2 * a * e, 2 * b * e], -1),
                     np.stack([c, c], -1)], -2)


def expsin_jacobian(x):
    return DenseMatrix(_expsin_jacobian_array(x))


def _bisect(g, lo, hi, tol=1e-15):
    glo = g(lo)
    if glo == 0.0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def expsin_roots():
    """The zeros inside the sampling box, by scan and bisection.

    On a zero ``s = x + y`` solves ``s = sin(3s)`` and ``x^2 + y^2 = ln 3``;
    each admissible ``s`` gives the two points ``(s +- d) / 2`` with
    ``d = sqrt(2 ln 3 - s^2)``.
    """
    def g(s):
        return s - math.sin(3.0 * s)

    grid = np.linspace(-3.0, 3.0, 6001) + 1e-4   # keep samples off s = 0
    vals = grid - np.sin(3.0 * grid)
    sums = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        sums.append(_bisect(g, grid[i], grid[i + 1]))
    roots = []
    r2 = math.log(3.0)
    for s in sorted(sums):
        d2 = 2.0 * r2 - s * s
        if d2 < 0:
            continue
        d = math.sqrt(d2)
        for pt in (((s + d) / 2, (s - d) / 2), ((s - d) / 2, (s + d) / 2)):
            if all(abs(c) <= 1.5 for c in pt):
                roots.append(pt)
    return tuple(roots)


def expsin_singular_offsets(box=EXPSIN_BOX):
    """Constants ``c`` of the singular lines ``x + y = c`` that meet ``box``."""
    base = math.acos(1.0 / 3.0) / 3.0
    period = 2.0 * math.pi / 3.0
    lo, hi = box[0] + box[2], box[1] + box[3]
    out = []
    kmax = int(math.ceil((abs(lo) + abs(hi)) / period)) + 1
    for k in range(-kmax, kmax + 1):
        for sign in (1.0, -1.0):
            c = sign * base + k * period
            if lo <= c <= hi:
                out.append(c)
    return sorted(out)


def expsin_singular_distance(x, box=EXPSIN_BOX):
    """Distance to the nearest line on which the Jacobian is singular."""
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    dist = np.abs(a - b) / math.sqrt(2.0)
    for c in expsin_singular_offsets(box):
        dist = np.minimum(dist, np.abs(a + b - c) / math.sqrt(2.0))
    return dist


class ExpSinProblem(_PlanarProblem):
    """The exp/sin system.

    ``box`` is the region [-1.5, 1.5]^2 used for sampling and plots.  The
    map itself is entire, so iterates are allowed to leave the box and come
    back; only overflow counts as divergence.
    """

    name = "expsin"
    rect = (0.0, 1.5, -1.5, 0.0)
    box = EXPSIN_BOX

    def __init__(self):
        super().__init__(2)
        roots = expsin_roots()
        self.catalog = RootCatalog(
            [(f"({x:.4f},{y:.4f})", (x, y)) for x, y in roots])

    def residual(self, x):
        return expsin_residual(x)

    def jacobian(self, x):
        return expsin_jacobian(x)

    def in_box(self, x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        x0, x1, y0, y1 = self.box
        return (a >= x0) & (a <= x1) & (b >= y0) & (b <= y1)

    _residual = staticmethod(expsin_residual)
    _jac = staticmethod(_expsin_jacobian_array)
