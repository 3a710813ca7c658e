"""
Damped Newton iteration, the prediction step-size controller and the
continuous Newton flow.

The Newton-Raphson transform ``N_F(x) = -F'(x)^{-1} F(x)`` is the vector
field of the continuous Newton method ``x' = N_F(x)``.  A damped Newton
step ``x + t N_F(x)`` is one explicit Euler step of that flow, so the three
iteration modes here only differ in how ``t`` is picked:

* ``classical``  -- always ``t = 1``
* ``fixed``      -- a constant ``t`` in (0, 1]
* ``adaptive``   -- ``t = min(sqrt(2 tau / ||N_F(x)||), 1)``

The adaptive rule keeps the leading-order deviation between the Euler step
and the exact trajectory at ``tau``.
"""
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg

__all__ = [
    "SingularJacobian",
    "OutOfDomain",
    "NonlinearProblem",
    "Status",
    "SolverConfig",
    "SolveTrace",
    "FlowTrajectory",
    "euclidean_norm",
    "nrt",
    "adaptive_step",
    "error_indicator",
    "newton_step",
    "solve",
    "flow",
]


class SingularJacobian(linalg.SingularMatrix):
    """The Jacobian could not be inverted at the current state."""


class OutOfDomain(ValueError):
    pass


def euclidean_norm(v):
    return float(np.sqrt(np.sum(np.square(v))))


class NonlinearProblem:
    """A finite-dimensional system ``F(x) = 0``.

    Parameters
    ----------
    dim : int
        Length of the state vector.
    residual : callable
        ``x -> F(x)``.
    jacobian : callable
        ``x -> F'(x)`` as a :class:`~newtonlab.linalg.DenseMatrix`,
        :class:`~newtonlab.linalg.TridiagonalMatrix` or
        :class:`~newtonlab.linalg.SparseMatrix`.
    in_domain : callable, optional
        Membership test for the domain; everything is admissible by default.
    norm : callable, optional
        Norm used for step-size control and stopping rules (Euclidean by
        default).

    Subclasses may override the ``*_many`` methods with vectorised
    versions; the fallbacks here loop over rows.
    """

    name = "custom"
    default_max_iters = 100

    def __init__(self, dim, residual=None, jacobian=None, in_domain=None,
                 norm=None, name=None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        if residual is not None:
            self.residual = residual
        if jacobian is not None:
            self.jacobian = jacobian
        if in_domain is not None:
            self.in_domain = in_domain
        if norm is not None:
            self.norm = norm
        if name is not None:
            self.name = name

    def residual(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def in_domain(self, x):
        return True

    def norm(self, v):
        return euclidean_norm(v)

    # -- stacked evaluation ------------------------------------------------

    def residual_many(self, xs):
        return np.array([self.residual(x) for x in xs]).reshape(len(xs), self.dim)

    def nrt_many(self, xs):
        """Return ``(N, failed)`` for every row of ``xs``."""
        out = np.full((len(xs), self.dim), np.nan)
        failed = np.zeros(len(xs), dtype=bool)
        for r, x in enumerate(xs):
            try:
                out[r] = nrt(self, x)
            except (linalg.LinAlgError, OutOfDomain):
                failed[r] = True
        return out, failed

    def residual_and_nrt_many(self, xs):
        """``(F, N, failed)`` in one pass; override when they share work."""
        direction, failed = self.nrt_many(xs)
        return self.residual_many(xs), direction, failed

    def norm_many(self, vs):
        return np.array([self.norm(v) for v in vs], dtype=float)

    def in_domain_many(self, xs):
        return np.array([bool(self.in_domain(x)) for x in xs], dtype=bool)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} dim={self.dim}>"


class Status(enum.IntEnum):
    CONVERGED = 0
    MAX_ITERS = 1
    SINGULAR = 2
    LEFT_DOMAIN = 3
    BLOWUP = 4

    def __str__(self):
        return _STATUS_NAMES[self]

    @classmethod
    def parse(cls, text):
        for status, name in _STATUS_NAMES.items():
            if name == text:
                return status
        raise ValueError(f"unknown status {text!r}")


_STATUS_NAMES = {
    Status.CONVERGED: "Converged",
    Status.MAX_ITERS: "MaxIters",
    Status.SINGULAR: "Singular",
    Status.LEFT_DOMAIN: "LeftDomain",
    Status.BLOWUP: "Blowup",
}


@dataclass(frozen=True)
class SolverConfig:
    """Iteration mode and stopping rules.

    ``mode`` is ``"classical"``, ``"fixed"`` (uses ``t``) or ``"adaptive"``
    (uses ``tau``).
    """

    mode: str = "adaptive"
    tau: float = 0.1
    t: float = 1.0
    max_iters: int = 100
    update_tol: float = 1e-8
    blowup_norm: float = 1e8

    def __post_init__(self):
        if self.mode not in ("classical", "fixed", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "adaptive" and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.mode == "fixed" and not 0 < self.t <= 1:
            raise ValueError("fixed step must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.update_tol > 0 or not self.blowup_norm > 0:
            raise ValueError("tolerances must be positive")

    @classmethod
    def classical(cls, **kw):
        return cls(mode="classical", **kw)

    @classmethod
    def fixed(cls, t, **kw):
        return cls(mode="fixed", t=t, **kw)

    @classmethod
    def adaptive(cls, tau, **kw):
        return cls(mode="adaptive", tau=tau, **kw)

    @classmethod
    def parse(cls, spec, **kw):
        """Build from ``classical``, ``fixed:<t>`` or ``adaptive:<tau>``."""
        head, _, arg = spec.partition(":")
        if head == "classical" and not arg:
            return cls.classical(**kw)
        if head in ("fixed", "adaptive") and arg:
            try:
                value = float(arg)
            except ValueError:
                raise ValueError(f"bad number in mode {spec!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"bad number in mode {spec!r}")
            return cls.fixed(value, **kw) if head == "fixed" else cls.adaptive(value, **kw)
        raise ValueError(f"cannot parse mode {spec!r}")

    @property
    def label(self):
        if self.mode == "classical":
            return "classical"
        if self.mode == "fixed":
            return f"fixed:{self.t:g}"
        return f"adaptive:{self.tau:g}"

    def step_size(self, nrt_norm):
        if self.mode == "classical":
            return 1.0
        if self.mode == "fixed":
            return self.t
        return adaptive_step(self.tau, nrt_norm)

    def step_sizes(self, nrt_norms):
        """Vectorised :meth:`step_size`."""
        nrt_norms = np.asarray(nrt_norms, dtype=float)
        if self.mode == "adaptive":
            with np.errstate(divide="ignore"):
                t = np.sqrt(2.0 * self.tau / nrt_norms)
            return np.where(nrt_norms > 0, np.minimum(t, 1.0), 1.0)
        return np.full(nrt_norms.shape, self.step_size(0.0))


def _jsonable(values):
    arr = np.asarray(values, dtype=float)
    out = arr.tolist()
    if np.all(np.isfinite(arr)):
        return out

    def clean(v):
        if isinstance(v, list):
            return [clean(u) for u in v]
        return v if math.isfinite(v) else None

    return clean(out)


@dataclass
class SolveTrace:
    """History of one Newton run.

    ``iterates`` and ``residual_norms`` hold one entry per state
    ``x_0 .. x_N``; ``steps`` and ``update_norms`` hold one entry per step
    taken, so they are one shorter.  ``update_norms[n]`` is
    ``||N_F(x_n)||``; the actual update was ``steps[n] * update_norms[n]``.
    """

    iterates: list
    steps: list
    residual_norms: list
    update_norms: list
    status: Status
    problem: str = "custom"
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def iterations(self):
        return len(self.steps)

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def converged(self):
        return self.status == Status.CONVERGED

    def to_dict(self):
        doc = {"problem": self.problem, "mode": self.config.mode}
        if self.config.mode == "adaptive":
            doc["tau"] = self.config.tau
        else:
            doc["t"] = 1.0 if self.config.mode == "classical" else self.config.t
        doc.update(
            iterates=_jsonable(self.iterates),
            steps=_jsonable(self.steps),
            residual_norms=_jsonable(self.residual_norms),
            update_norms=_jsonable(self.update_norms),
            status=str(self.status),
        )
        return doc

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


@dataclass
class FlowTrajectory:
    """Explicit Euler discretisation of the Newton flow on a uniform grid."""

    dt: float
    times: list
    states: list
    residual_norms: list
    residual_stop: float
    problem: str = "custom"
    settled: bool = False

    @property
    def final(self):
        return self.states[-1]

    @property
    def reached(self):
        """True when the run stopped on the residual or transform criterion."""
        return self.settled or self.residual_norms[-1] <= self.residual_stop

    def to_dict(self):
        return {
            "problem": self.problem,
            "mode": "flow",
            "dt": self.dt,
            "times": _jsonable(self.times),
            "iterates": _jsonable(self.states),
            "residual_norms": _jsonable(self.residual_norms),
            "status": "Converged" if self.reached else "Truncated",
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------

def nrt(p, x):
    """Newton-Raphson transform ``-F'(x)^{-1} F(x)``.

    Raises :class:`SingularJacobian` when the linear solve breaks down or
    ``F`` / ``F'`` are not finite at ``x``.
    """
    x = np.asarray(x, dtype=float)
    if not p.in_domain(x):
        raise OutOfDomain("state lies outside the problem domain")
    with np.errstate(all="ignore"):
        rhs = -np.asarray(p.residual(x), dtype=float)
        if not np.all(np.isfinite(rhs)):
            raise SingularJacobian("residual is not finite")
        try:
            jac = p.jacobian(x)
        except ValueError as err:
            # the matrix containers reject non-finite entries
            raise SingularJacobian(str(err)) from err
    try:
        return linalg.solve(jac, rhs)
    except linalg.LinAlgError as err:
        raise SingularJacobian(str(err)) from err


def adaptive_step(tau, nrt_norm):
    """Prediction step size ``min(sqrt(2 tau / ||N||), 1)``.

    A vanishing transform (the state is a root) gives the full step.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if nrt_norm <= 0:
        return 1.0
    return min(math.sqrt(2.0 * tau / nrt_norm), 1.0)


def error_indicator(nrt_at_x0, t, norm=euclidean_norm):
    """Leading deviation ``||N_F(x0)|| (t + exp(-t) - 1)`` of an Euler step
    of length ``t`` from the exact flow."""
    if t < 0:
        raise ValueError("t must be non-negative")
    # expm1 keeps the small-t regime accurate
    return norm(nrt_at_x0) * (t + math.expm1(-t))


def newton_step(p, x, t):
    if not 0 < t <= 1:
        raise ValueError("step size must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    return x + t * nrt(p, x)


def solve(p, x0, cfg=None):
    """Run the damped Newton iteration from ``x0``.

    Failures never raise; they end the run and are reported through
    :attr:`SolveTrace.status`.
    """
    cfg = cfg or SolverConfig()
    x = np.array(x0, dtype=float).ravel()
    if x.size != p.dim:
        raise ValueError(f"x0 has length {x.size}, expected {p.dim}")
    if not p.in_domain(x):
        raise OutOfDomain("initial guess lies outside the domain")
    iterates = [x]
    residual_norms = [p.norm(p.residual(x))]
    steps, update_norms = [], []
    status = Status.MAX_ITERS
    with np.errstate(all="ignore"):
        for _ in range(cfg.max_iters):
            try:
                direction = nrt(p, x)
            except SingularJacobian:
                status = Status.SINGULAR
                break
            size = p.norm(direction)
            t = cfg.step_size(size)
            x = x + t * direction
            steps.append(t)
            update_norms.append(size)
            iterates.append(x)
            finite = bool(np.all(np.isfinite(x)))
            residual_norms.append(p.norm(p.residual(x)) if finite else math.inf)
            if not finite or p.norm(x) > cfg.blowup_norm:
                status = Status.BLOWUP
                break
            if not p.in_domain(x):
                status = Status.LEFT_DOMAIN
                break
            if t * size <= cfg.update_tol:
                status = Status.CONVERGED
                break
    return SolveTrace(iterates, steps, residual_norms, update_norms, status,
                      problem=p.name, config=cfg)


def flow(p, x0, dt=1e-2, t_max=50.0, residual_stop=1e-8, nrt_stop=None,
         monotone=True):
    """Integrate ``x' = N_F(x)`` by explicit Euler with uniform step ``dt``.

    Stops when ``||F(x)|| <= residual_stop``, when ``t_max`` is reached, or
    at the first failure (singular Jacobian, non-finite state, domain exit);
    in the last case the trajectory simply ends at the last valid state.

    ``nrt_stop`` optionally ends the run once ``||N_F(x)|| <= nrt_stop``.
    Near a regular zero the field decays like ``exp(-t)``, so the rest of
    the exact trajectory has length about ``nrt_stop``; that is enough to
    tell which zero it ends at without integrating the full tail.

    Along the exact flow ``||F||`` decays like ``exp(-t)``.  With
    ``monotone`` an Euler step that increases ``||F||`` counts as a failure:
    the discrete path has jumped across a region where ``F'`` is nearly
    singular and no longer follows the continuous trajectory.
    """
    if not 0 < dt <= 1:
        raise ValueError("dt must lie in (0, 1]")
    if not t_max > 0 or not residual_stop > 0:
        raise ValueError("t_max and residual_stop must be positive")
    x = np.array(x0, dtype=float).ravel()
    if not p.in_domain(x):
        raise OutOfDomain("initial state lies outside the domain")
    states, times = [x], [0.0]
    residual_norms = [p.norm(p.residual(x))]
    settled = False
    nsteps = int(round(t_max / dt))
    with np.errstate(all="ignore"):
        for k in range(1, nsteps + 1):
            if residual_norms[-1] <= residual_stop:
                break
            try:
                direction = nrt(p, x)
            except (SingularJacobian, OutOfDomain):
                break
            if nrt_stop is not None and p.norm(direction) <= nrt_stop:
                settled = True
                break
            x_new = x + dt * direction
            if not np.all(np.isfinite(x_new)) or not p.in_domain(x_new):
                break
            r_new = p.norm(p.residual(x_new))
            if monotone and not r_new <= residual_norms[-1]:
                break
            x = x_new
            states.append(x)
            times.append(k * dt)
            residual_norms.append(r_new)
    return FlowTrajectory(dt, times, states, residual_norms, residual_stop,
                          problem=p.name, settled=settled)
