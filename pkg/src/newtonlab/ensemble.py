"""
Lockstep versions of :func:`newtonlab.core.solve` and
:func:`newtonlab.core.flow` for many initial states at once.

Rows are independent: every operation is elementwise or a reduction along
the state axis, so the result for a row does not depend on which other rows
share the batch.  Finished rows are dropped from the working set.
"""
from dataclasses import dataclass

import numpy as np

from .core import Status

__all__ = ["EnsembleRun", "EnsembleFlow", "solve_many", "flow_many"]

RUNNING = -1


@dataclass
class EnsembleRun:
    final: np.ndarray        # (m, dim)
    status: np.ndarray       # (m,) int8, values of Status
    iterations: np.ndarray   # (m,) steps taken
    step_sum: np.ndarray     # (m,) sum of t_n
    last_step: np.ndarray    # (m,) final t_n (nan if no step)
    history: np.ndarray = None   # (m, max_iters + 1, k) probe values, nan padded


@dataclass
class EnsembleFlow:
    final: np.ndarray        # (m, dim)
    reached: np.ndarray      # (m,) residual criterion met
    time: np.ndarray         # (m,) flow time at stop


def solve_many(p, x0s, cfg, probe=None):
    """Run ``solve`` for every row of ``x0s``.

    ``probe(xs) -> (m, k)`` is evaluated on every iterate and stored in
    :attr:`EnsembleRun.history` (used for convergence-rate fits).
    """
    x = np.array(x0s, dtype=float).reshape(-1, p.dim)
    m = x.shape[0]
    status = np.full(m, RUNNING, dtype=np.int8)
    iterations = np.zeros(m, dtype=np.int64)
    step_sum = np.zeros(m)
    last_step = np.full(m, np.nan)
    history = None
    if probe is not None:
        first = np.asarray(probe(x), dtype=float).reshape(m, -1)
        history = np.full((m, cfg.max_iters + 1, first.shape[1]), np.nan)
        history[:, 0] = first
    with np.errstate(all="ignore"):
        for n in range(cfg.max_iters):
            idx = np.flatnonzero(status == RUNNING)
            if idx.size == 0:
                break
            xa = x[idx]
            direction, failed = p.nrt_many(xa)
            status[idx[failed]] = Status.SINGULAR
            ok = ~failed
            idx, xa, direction = idx[ok], xa[ok], direction[ok]
            if idx.size == 0:
                continue
            size = p.norm_many(direction)
            t = cfg.step_sizes(size)
            xn = xa + t[:, None] * direction
            x[idx] = xn
            iterations[idx] += 1
            step_sum[idx] += t
            last_step[idx] = t
            if history is not None:
                history[idx, n + 1] = np.asarray(probe(xn), dtype=float).reshape(idx.size, -1)
            finite = np.all(np.isfinite(xn), axis=1)
            blow = ~finite
            blow[finite] = p.norm_many(xn[finite]) > cfg.blowup_norm
            out = np.zeros(idx.size, dtype=bool)
            out[~blow] = ~p.in_domain_many(xn[~blow])
            conv = ~blow & ~out & (t * size <= cfg.update_tol)
            status[idx[blow]] = Status.BLOWUP
            status[idx[out]] = Status.LEFT_DOMAIN
            status[idx[conv]] = Status.CONVERGED
    status[status == RUNNING] = Status.MAX_ITERS
    return EnsembleRun(x, status, iterations, step_sum, last_step, history)


def flow_many(p, x0s, dt=1e-2, t_max=50.0, residual_stop=1e-8, nrt_stop=None,
              monotone=True):
    """Explicit Euler on the Newton field for every row of ``x0s``.

    Same stopping rules as :func:`newtonlab.core.flow`.
    """
    x = np.array(x0s, dtype=float).reshape(-1, p.dim)
    m = x.shape[0]
    active = np.ones(m, dtype=bool)
    reached = np.zeros(m, dtype=bool)
    time = np.zeros(m)
    last = np.full(m, np.inf)
    prev = x.copy()
    nsteps = int(round(t_max / dt))
    with np.errstate(all="ignore"):
        for k in range(nsteps + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xa = x[idx]
            res, direction, failed = p.residual_and_nrt_many(xa)
            size = p.norm_many(res)
            if monotone:
                # an increase means the last step left the trajectory; undo it
                grew = ~(size <= last[idx])
                failed = failed | grew
                x[idx[grew]] = prev[idx[grew]]
                time[idx[grew]] -= dt
                last[idx] = size
            done = ~failed & (size <= residual_stop)
            if nrt_stop is not None:
                done |= ~failed & (p.norm_many(direction) <= nrt_stop)
            reached[idx[done]] = True
            if k == nsteps:
                break
            go = ~done & ~failed
            xn = xa[go] + dt * direction[go]
            good = np.all(np.isfinite(xn), axis=1)
            good[good] = p.in_domain_many(xn[good])
            moved = idx[go][good]
            prev[moved] = xa[go][good]
            x[moved] = xn[good]
            time[moved] = (k + 1) * dt
            active[idx] = False
            active[moved] = True
    return EnsembleFlow(x, reached, time)
