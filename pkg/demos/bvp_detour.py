"""Extremal value of each iterate for u'' + u^3 = 0 from the hat at (0.5, -2.405).

With tau = 0.5 the adaptive iteration follows the flow to u0 while the
classical one overshoots and ends at u+.

    python demos/bvp_detour.py
"""
import numpy as np

from newtonlab import SolverConfig, make_problem, solve

p = make_problem("cubic-bvp:n=100")
x0 = p.initial_guess(0.5, -2.405)


def extremal(u):
    return u[np.argmax(np.abs(u))]


for cfg in (SolverConfig.classical(max_iters=200), SolverConfig.adaptive(0.5, max_iters=200)):
    tr = solve(p, x0, cfg)
    label = p.catalog.classify(tr.final) if tr.converged else "none"
    values = ", ".join(f"{extremal(u):.3f}" for u in tr.iterates[:12])
    more = " ..." if len(tr.iterates) > 12 else ""
    print(f"{cfg.mode:9s} -> {label:2s} in {tr.iterations:2d} iterations: {values}{more}")
