"""
Problem ids understood by the command line and the basin sampler.

    cubic                 z^3 - 2z - 4
    expsin                exp/sin system
    cubic-bvp[:n=<n>]     u'' + u^3 = 0, P1 elements (default n = 100)
    bratu[:n=<n>]         u'' + exp(u + 1) = 0 (default n = 100)
    cubic-pde[:n=<n>[,j=<j>]]
                          Laplace(u) + u^3 = 0, 5-point stencil (default n = 16);
                          ``j`` is the hill row of the sampling plane (default n // 2)

Problems are immutable, so instances are cached per id.
"""
from functools import lru_cache

from .algebraic import CubicProblem, ExpSinProblem
from .bvp1d import BratuBVP, CubicBVP
from .pde2d import PdeProblem

__all__ = ["make_problem", "canonical_id", "PROBLEM_KINDS", "DEFAULT_RESOLUTION",
           "PAPER_RESOLUTION"]

PROBLEM_KINDS = {
    "cubic": (CubicProblem, None),
    "expsin": (ExpSinProblem, None),
    "cubic-bvp": (CubicBVP, 100),
    "bratu": (BratuBVP, 100),
    "cubic-pde": (PdeProblem, 16),
}

# sampling resolution per family, desk scale and the published scale
DEFAULT_RESOLUTION = {"algebraic": (201, 201), "bvp1d": (100, 100), "pde2d": (64, 64)}
PAPER_RESOLUTION = {"algebraic": (1001, 1001), "bvp1d": (400, 400), "pde2d": (500, 500)}


def _parse_params(kind, rest):
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        allowed = ("n", "j") if kind == "cubic-pde" else ("n",)
        if key not in allowed or not value.isdigit() or key in params:
            raise ValueError(f"bad parameter {item!r} for {kind}")
        params[key] = int(value)
    return params


def canonical_id(pid):
    """Normalise ``pid`` to ``kind`` or ``kind:n=<n>``; raises ValueError."""
    kind, _, rest = str(pid).strip().partition(":")
    if kind not in PROBLEM_KINDS:
        known = ", ".join(sorted(PROBLEM_KINDS))
        raise ValueError(f"unknown problem {pid!r} (known: {known})")
    default_n = PROBLEM_KINDS[kind][1]
    if default_n is None:
        if rest:
            raise ValueError(f"problem {kind!r} takes no parameters")
        return kind
    params = _parse_params(kind, rest)
    n = params.get("n", default_n)
    minimum = 3 if kind == "cubic-pde" else 2
    if n < minimum:
        raise ValueError(f"{kind} needs n >= {minimum}")
    cid = f"{kind}:n={n}"
    j = params.get("j", n // 2)
    if kind == "cubic-pde" and j != n // 2:
        if not 1 <= j <= n - 1:
            raise ValueError(f"j must lie in 1..{n - 1}")
        cid += f",j={j}"
    return cid


@lru_cache(maxsize=None)
def _make(cid):
    kind, _, rest = cid.partition(":")
    cls = PROBLEM_KINDS[kind][0]
    return cls(**_parse_params(kind, rest))


def make_problem(pid):
    """Problem instance for an id such as ``"bratu:n=50"``."""
    return _make(canonical_id(pid))


def family(problem):
    return getattr(problem, "family", "algebraic")
