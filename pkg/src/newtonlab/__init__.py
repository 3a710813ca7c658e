"""
Adaptive step-size Newton method and the continuous Newton flow.

The damped iteration ``x + t N_F(x)`` with ``t = min(sqrt(2 tau / ||N_F||), 1)``
follows the continuous Newton trajectory closely enough to stay in the basin
of the zero the trajectory leads to, which the undamped iteration often does
not.  The package provides the solver, a flow integrator used as reference,
five test problems and tools to sample and render basins of attraction.
"""
from .core import (
    FlowTrajectory,
    NonlinearProblem,
    OutOfDomain,
    SingularJacobian,
    SolveTrace,
    SolverConfig,
    Status,
    adaptive_step,
    error_indicator,
    flow,
    newton_step,
    nrt,
    solve,
)
from .registry import make_problem

__version__ = "0.1.0"

__all__ = [
    "FlowTrajectory",
    "NonlinearProblem",
    "OutOfDomain",
    "SingularJacobian",
    "SolveTrace",
    "SolverConfig",
    "Status",
    "adaptive_step",
    "error_indicator",
    "flow",
    "newton_step",
    "nrt",
    "solve",
    "make_problem",
]
