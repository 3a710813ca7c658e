"""Classical, adaptive and continuous Newton on z^3 - 2z - 4 from (0.08, 0.55).

The classical iteration takes a large first step and lands near a
different zero than the Newton flow; the adaptive one stays close to the
flow path.

    python demos/adaptive_vs_classical.py
"""
import numpy as np

from newtonlab import SolverConfig, flow, make_problem, solve

p = make_problem("cubic")
x0 = np.array([0.08, 0.55])

reference = flow(p, x0, dt=1e-3)
target = p.catalog.classify(reference.final)
print(f"flow ends at {reference.final.round(6)} ({target})")

for cfg in (SolverConfig.classical(), SolverConfig.adaptive(0.05)):
    tr = solve(p, x0, cfg)
    label = p.catalog.classify(tr.final) if tr.converged else "none"
    print(f"\n{cfg.mode}: {tr.status}, {tr.iterations} iterations, zero {label}")
    for k, (x, t) in enumerate(zip(tr.iterates, tr.steps + [None])):
        step = "" if t is None else f"  t = {t:.3f}"
        print(f"  {k:2d}  ({x[0]: .6f}, {x[1]: .6f}){step}")
