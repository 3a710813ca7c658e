"""
Basins of attraction over two-parameter families of initial guesses.

Every cell of a rectangular plan is solved with the chosen iteration mode
and, independently, integrated along the continuous Newton flow.  The flow
endpoint is the "correct" zero for that cell; a cell only counts as
convergent when the discrete iteration reaches the same zero.

The plane is the initial state itself for the planar systems and
``(position, amplitude)`` for the boundary value problems, where the
position picks the grid node carrying the peak of the tent or hill.

Cells are processed in fixed-size chunks.  Each row of a chunk is computed
independently of the others, so the output does not depend on the number of
worker threads.
"""
import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import SolverConfig, Status, flow, solve
from .ensemble import flow_many, solve_many
from .registry import canonical_id, make_problem

__all__ = [
    "InsufficientData",
    "OracleConfig",
    "SamplingPlan",
    "BasinGrid",
    "PerformanceTable",
    "plane_coordinates",
    "sample_basin",
    "estimate_rate",
    "aggregate",
    "render_basin",
    "export_direction_field",
    "export_trajectory_comparison",
    "write_stats_csv",
    "STATS_HEADER",
    "ERROR_FLOOR",
    "DIVERGENT",
    "UNDEFINED",
]

ERROR_FLOOR = 1e-14
DIVERGENT = -1       # no catalogued zero reached
UNDEFINED = -2       # flow oracle did not settle on a catalogued zero
STATS_HEADER = "avg_iterations,avg_step_size,pct_convergent,avg_rate"
CHUNK = 2048


class InsufficientData(ValueError):
    """Fewer than three usable errors for a rate fit."""


@dataclass(frozen=True)
class OracleConfig:
    """Explicit Euler settings for the reference flow.

    ``nrt_stop`` ends a trajectory once the Newton field is shorter than
    the given value; the remaining path is then about that long, far less
    than the spacing of the zeros.
    """

    dt: float = 1e-2
    t_max: float = 50.0
    residual_stop: float = 1e-8
    nrt_stop: float = 1e-3

    def __post_init__(self):
        if not 0 < self.dt <= 1:
            raise ValueError("dt must lie in (0, 1]")
        if not self.t_max > 0 or not self.residual_stop > 0:
            raise ValueError("t_max and residual_stop must be positive")
        if self.nrt_stop is not None and not self.nrt_stop > 0:
            raise ValueError("nrt_stop must be positive")


@dataclass(frozen=True)
class SamplingPlan:
    """A ``nx x ny`` grid of initial guesses over ``rect = (a, b, c, d)``."""

    problem: str
    rect: tuple
    resolution: tuple
    config: SolverConfig
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def __post_init__(self):
        object.__setattr__(self, "problem", canonical_id(self.problem))
        rect = tuple(float(v) for v in self.rect)
        if len(rect) != 4 or not all(math.isfinite(v) for v in rect):
            raise ValueError("rect needs four finite numbers a,b,c,d")
        if not (rect[0] < rect[1] and rect[2] < rect[3]):
            raise ValueError("rect must satisfy a < b and c < d")
        res = tuple(int(v) for v in self.resolution)
        if len(res) != 2 or min(res) < 2:
            raise ValueError("resolution must be two integers >= 2")
        object.__setattr__(self, "rect", rect)
        object.__setattr__(self, "resolution", res)

    @property
    def cells(self):
        return self.resolution[0] * self.resolution[1]


def _axis(lo, hi, count):
    # symmetric about the midpoint bit for bit, so mirrored plans mirror exactly
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    k = np.arange(count, dtype=float)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + half * (2.0 * k - (count - 1)) / (count - 1)


def plane_coordinates(rect, resolution):
    """Cell centres ``(s, t)`` as ``(ny, nx)`` arrays, row 0 at the top (t = d)."""
    a, b, c, d = rect
    nx, ny = resolution
    s = _axis(a, b, nx)
    t = _axis(c, d, ny)[::-1]
    return np.meshgrid(s, t)


@dataclass
class BasinGrid:
    """Per-cell results of :func:`sample_basin`, each of shape ``(ny, nx)``.

    ``label`` indexes ``names`` or is :data:`DIVERGENT`; ``oracle`` is the
    label of the flow endpoint or :data:`UNDEFINED`.
    """

    names: list
    label: np.ndarray
    oracle: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    step_sum: np.ndarray
    last_step: np.ndarray
    rate: np.ndarray
    plan: SamplingPlan = None
    plane_points: list = field(default_factory=list)

    @property
    def shape(self):
        return self.label.shape

    @property
    def correct(self):
        return (self.label >= 0) & (self.label == self.oracle)

    @property
    def wrong(self):
        """Converged to a catalogued zero other than the oracle's."""
        return (self.label >= 0) & (self.oracle >= 0) & (self.label != self.oracle)

    @property
    def defined(self):
        return self.oracle != UNDEFINED

    def incorrect_fraction(self):
        d = self.defined
        return float(self.wrong[d].sum() / max(d.sum(), 1))


# ---------------------------------------------------------------------------
# rate estimation

def _usable_prefix(errors):
    errors = np.asarray(errors, dtype=float)
    ok = np.isfinite(errors) & (errors > ERROR_FLOOR)
    return np.cumprod(ok, axis=-1).astype(bool)


def estimate_rate(errors):
    """Least-squares fit ``ln e_n = C + rho ln e_{n-1}``.

    Errors at or below ``1e-14`` are cut off together with everything after
    them.  Returns ``(rho, C)``.

    Raises
    ------
    InsufficientData
        When fewer than three errors remain or they are all equal.
    """
    errors = np.asarray(errors, dtype=float).ravel()
    if np.any(errors < 0):
        raise ValueError("errors must be nonnegative")
    used = errors[_usable_prefix(errors)]
    if used.size < 3:
        raise InsufficientData(f"need 3 errors above {ERROR_FLOOR:g}, got {used.size}")
    x, y = np.log(used[:-1]), np.log(used[1:])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0.0:
        raise InsufficientData("errors do not change")
    rho = np.sum((x - xm) * (y - ym)) / sxx
    return float(rho), float(ym - rho * xm)


def _rates(errors):
    """Row-wise :func:`estimate_rate` slopes; NaN where the fit is undefined."""
    errors = np.asarray(errors, dtype=float)
    use = _usable_prefix(errors)
    with np.errstate(divide="ignore", invalid="ignore"):
        le = np.where(use, np.log(np.where(use, errors, 1.0)), 0.0)
        pair = use[:, 1:]                        # prefix, so e_{n-1} is usable too
        x, y = le[:, :-1] * pair, le[:, 1:] * pair
        k = pair.sum(axis=1)
        xm = x.sum(axis=1) / k
        ym = y.sum(axis=1) / k
        dx = (le[:, :-1] - xm[:, None]) * pair
        dy = (le[:, 1:] - ym[:, None]) * pair
        sxx = np.sum(dx * dx, axis=1)
        rho = np.sum(dx * dy, axis=1) / sxx
    rho[(k < 2) | ~(sxx > 0)] = np.nan
    return rho


# ---------------------------------------------------------------------------
# sampling

def _keys(p, s, t):
    # guesses that only depend on the node nearest to s are sampled once
    if hasattr(p, "node_index"):
        return np.stack([p.node_index(s).astype(float), t], axis=1)
    return np.stack([s, t], axis=1)


def _chunks(count, size=CHUNK):
    return [slice(i, min(i + size, count)) for i in range(0, count, size)]


def _oracle_chunk(p, plan, s, t):
    o = plan.oracle
    fl = flow_many(p, p.initial_guesses(s, t), dt=o.dt, t_max=o.t_max,
                   residual_stop=o.residual_stop, nrt_stop=o.nrt_stop)
    oracle = p.catalog.classify_many(fl.final)
    oracle[~fl.reached | (oracle < 0)] = UNDEFINED
    return oracle


def _solve_chunk(p, plan, s, t, oracle):
    catalog = p.catalog
    run = solve_many(p, p.initial_guesses(s, t), plan.config, probe=catalog.probe_many)
    label = catalog.classify_many(run.final)
    label[(run.status != Status.CONVERGED) | (label < 0)] = DIVERGENT

    rate = np.full(len(s), np.nan)
    good = np.flatnonzero((label >= 0) & (label == oracle))
    for lab in np.unique(label[good]):
        rows = good[label[good] == lab]
        rate[rows] = _rates(catalog.errors(run.history[rows], lab))
    return label, run.status, run.iterations, run.step_sum, run.last_step, rate


def default_threads():
    env = os.environ.get("NEWTONLAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_chunks(fn, count, threads, progress=None):
    parts = _chunks(count)
    out = [None] * len(parts)

    def work(i):
        out[i] = fn(parts[i])

    with np.errstate(all="ignore"):
        if threads == 1 or len(parts) <= 1:
            for i in range(len(parts)):
                work(i)
                if progress:
                    progress(i + 1, len(parts))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for done, _ in enumerate(pool.map(work, range(len(parts))), 1):
                    if progress:
                        progress(done, len(parts))
    return out


# reference labels only depend on the plane and the flow settings, so runs
# with different iteration modes share them
_ORACLES = {}
_ORACLE_SLOTS = 4


def _oracle_for(p, plan, us, ut, threads):
    key = (plan.problem, plan.rect, plan.resolution, plan.oracle)
    hit = _ORACLES.get(key)
    if hit is None:
        out = _map_chunks(lambda sl: _oracle_chunk(p, plan, us[sl], ut[sl]),
                          len(us), threads)
        hit = np.concatenate(out)
        hit.setflags(write=False)
        if len(_ORACLES) >= _ORACLE_SLOTS:
            _ORACLES.pop(next(iter(_ORACLES)))
        _ORACLES[key] = hit
    return hit


def sample_basin(plan, threads=None, progress=None):
    """Solve and classify every cell of ``plan``.

    Parameters
    ----------
    plan : SamplingPlan
    threads : int, optional
        Worker threads (default: ``NEWTONLAB_THREADS`` or the CPU count).
        The result does not depend on this value.
    progress : callable, optional
        Called as ``progress(done, total)`` after each chunk of the solve
        phase.

    Returns
    -------
    BasinGrid
    """
    p = make_problem(plan.problem)
    s, t = plane_coordinates(plan.rect, plan.resolution)
    s, t = s.ravel(), t.ravel()
    _, first, inverse = np.unique(_keys(p, s, t), axis=0, return_index=True,
                                  return_inverse=True)
    inverse = inverse.ravel()
    us, ut = s[first], t[first]
    threads = default_threads() if threads is None else max(1, int(threads))

    oracle = _oracle_for(p, plan, us, ut, threads)
    out = _map_chunks(lambda sl: _solve_chunk(p, plan, us[sl], ut[sl], oracle[sl]),
                      len(us), threads, progress)
    fields = [oracle] + [np.concatenate([o[k] for o in out]) for k in range(6)]
    shape = (plan.resolution[1], plan.resolution[0])
    oracle, label, status, iterations, step_sum, last_step, rate = (
        f[inverse].reshape(shape) for f in fields)
    return BasinGrid(names=list(p.catalog.names), label=label, oracle=oracle,
                     status=status, iterations=iterations, step_sum=step_sum,
                     last_step=last_step, rate=rate, plan=plan,
                     plane_points=list(p.catalog.plane_points()))


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class PerformanceTable:
    """Aggregate statistics in the layout of the published tables.

    Averages run over convergent cells (correct zero reached); the
    percentage is taken over cells whose oracle is defined.
    """

    avg_iterations: float
    avg_step_size: float
    pct_convergent: float
    avg_rate: float
    cells: int = 0
    convergent: int = 0
    converged_any: int = 0
    wrong_zero: int = 0
    undefined: int = 0
    rated: int = 0

    def row(self):
        return ",".join(_fmt(v) for v in (self.avg_iterations, self.avg_step_size,
                                          self.pct_convergent, self.avg_rate))


def _fmt(v):
    return "nan" if not math.isfinite(v) else f"{v:.6f}"


def aggregate(grid):
    """Reduce a :class:`BasinGrid` to a :class:`PerformanceTable`."""
    correct = grid.correct.ravel()
    defined = grid.defined.ravel()
    iters = grid.iterations.ravel()[correct]
    steps = grid.step_sum.ravel()[correct]
    rates = grid.rate.ravel()[correct]
    rates = rates[np.isfinite(rates)]
    nan = float("nan")
    n_def = int(defined.sum())
    return PerformanceTable(
        avg_iterations=float(iters.mean()) if iters.size else nan,
        avg_step_size=float(steps.sum() / iters.sum()) if iters.sum() else nan,
        pct_convergent=100.0 * correct.sum() / n_def if n_def else nan,
        avg_rate=float(rates.mean()) if rates.size else nan,
        cells=int(correct.size),
        convergent=int(correct.sum()),
        converged_any=int((grid.label >= 0).sum()),
        wrong_zero=int(grid.wrong.sum()),
        undefined=int(correct.size - n_def),
        rated=int(rates.size),
    )


def write_stats_csv(table, path):
    with open(path, "w", newline="") as fh:
        fh.write(STATS_HEADER + "\n" + table.row() + "\n")


def write_cells_csv(grid, path):
    """One line per cell: position, labels, iteration data and rate."""
    s, t = plane_coordinates(grid.plan.rect, grid.plan.resolution)
    names = grid.names

    def name(v):
        if v >= 0:
            return names[v]
        return "divergent" if v == DIVERGENT else "undefined"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "s", "t", "label", "oracle", "status",
                    "iterations", "avg_step", "rate"])
        ny, nx = grid.shape
        for r in range(ny):
            for c in range(nx):
                it = int(grid.iterations[r, c])
                w.writerow([r, c, repr(float(s[r, c])), repr(float(t[r, c])),
                            name(grid.label[r, c]), name(grid.oracle[r, c]),
                            str(Status(int(grid.status[r, c]))), it,
                            _fmt(grid.step_sum[r, c] / it if it else float("nan")),
                            _fmt(float(grid.rate[r, c]))])


# ---------------------------------------------------------------------------
# images

PALETTE = (
    (230, 159, 0),
    (86, 180, 233),
    (0, 158, 115),
    (240, 228, 66),
    (0, 114, 178),
    (213, 94, 0),
    (204, 121, 167),
    (160, 160, 160),
)
DARK = (16, 40, 24)
MARK = (255, 255, 255)


def render_basin(grid, palette=PALETTE, shade=False, mark_roots=False):
    """Binary PPM (P6) with one pixel per cell.

    Cells get the colour of the zero they reached and :data:`DARK` when
    they diverged.  ``shade`` darkens cells that needed many iterations;
    ``mark_roots`` draws a ring around every catalogued zero inside the
    plane (planar problems only).
    """
    ny, nx = grid.shape
    colors = np.array(list(palette) + [DARK], dtype=float)
    idx = np.where(grid.label >= 0, grid.label % len(palette), len(palette))
    img = colors[idx]
    if shade:
        it = grid.iterations.astype(float)
        factor = np.clip(1.0 - 0.6 * np.log1p(np.maximum(it - 1.0, 0.0)) / math.log(101.0),
                         0.4, 1.0)
        img = img * np.where(grid.label >= 0, factor, 1.0)[..., None]
    img = np.rint(img).astype(np.uint8)
    if mark_roots and grid.plan is not None and grid.plane_points:
        s, t = plane_coordinates(grid.plan.rect, grid.plan.resolution)
        a, b, c, d = grid.plan.rect
        px = (b - a) / max(nx - 1, 1)
        py = (d - c) / max(ny - 1, 1)
        radius = max(2.0, min(nx, ny) / 80.0)
        for x, y in grid.plane_points:
            if not (a <= x <= b and c <= y <= d):
                continue
            dist = np.hypot((s - x) / px, (t - y) / py)
            img[np.abs(dist - radius) <= 0.75] = MARK
    header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
    return header + img.tobytes()


def read_ppm(data):
    """Decode a P6 image produced by :func:`render_basin` to ``(h, w, 3)``."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------------------
# direction fields and trajectory bundles

def export_direction_field(problem, rect, resolution, kind="nrt"):
    """CSV text with rows ``x,y,vx,vy,magnitude,flag``.

    ``kind="raw"`` samples ``F``, ``kind="nrt"`` the Newton field.  Vectors
    are normalised to unit length; ``magnitude`` keeps the original length.
    ``flag`` is ``ok``, ``fixed`` (zero vector) or ``singular`` (no
    Newton direction; ``vx, vy`` left empty).
    """
    p = make_problem(problem) if isinstance(problem, str) else problem
    if p.dim != 2:
        raise ValueError("direction fields need a planar problem")
    if kind not in ("raw", "nrt"):
        raise ValueError("kind must be 'raw' or 'nrt'")
    nx, ny = (int(v) for v in resolution)
    if min(nx, ny) < 2:
        raise ValueError("resolution must be >= 2 on both axes")
    s, t = plane_coordinates(rect, (nx, ny))
    pts = np.stack([s.ravel(), t.ravel()], axis=1)
    with np.errstate(all="ignore"):
        if kind == "raw":
            vec = p.residual_many(pts)
            bad = ~np.all(np.isfinite(vec), axis=1)
        else:
            vec, bad = p.nrt_many(pts)
            bad = bad | ~np.all(np.isfinite(vec), axis=1)
        mag = np.hypot(vec[:, 0], vec[:, 1])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "vx", "vy", "magnitude", "flag"])
    for (x, y), v, m, b in zip(pts, vec, mag, bad):
        if b:
            w.writerow([repr(float(x)), repr(float(y)), "", "", "", "singular"])
        elif m == 0.0:
            w.writerow([repr(float(x)), repr(float(y)), "0.0", "0.0", "0.0", "fixed"])
        else:
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v[0] / m)),
                        repr(float(v[1] / m)), repr(float(m)), "ok"])
    return buf.getvalue()


def _label_name(p, x):
    return p.catalog.classify(np.asarray(x, dtype=float))


def _extremal(p, states):
    if hasattr(p, "extremal_many"):
        return [float(v) for v in p.extremal_many(np.asarray(states, dtype=float))]
    return None


def export_trajectory_comparison(problem, x0, tau=0.05, dt=1e-2, max_iters=None,
                                 t_max=50.0):
    """Classical, adaptive and flow runs from one start, as a dict.

    ``x0`` is a point of the sampling plane.  For the boundary value
    problems every trace also lists the extremal nodal value of each iterate
    (the quantity plotted against the iteration index).
    """
    p = make_problem(problem) if isinstance(problem, str) else problem
    start = p.initial_guess(*x0)
    iters = p.default_max_iters if max_iters is None else int(max_iters)
    runs = {}
    for key, cfg in (("classical", SolverConfig.classical(max_iters=iters)),
                     ("adaptive", SolverConfig.adaptive(tau, max_iters=iters))):
        tr = solve(p, start, cfg)
        d = tr.to_dict()
        d["label"] = _label_name(p, tr.final) if tr.converged else None
        ext = _extremal(p, tr.iterates)
        if ext is not None:
            d["extremal"] = ext
        runs[key] = d
    traj = flow(p, start, dt=dt, t_max=t_max)
    d = traj.to_dict()
    d["label"] = _label_name(p, traj.final) if traj.reached else None
    ext = _extremal(p, traj.states)
    if ext is not None:
        d["extremal"] = ext
    runs["flow"] = d
    bundle = {"problem": p.name, "x0": [float(v) for v in x0], "tau": float(tau),
              "dt": float(dt)}
    bundle.update(runs)
    if hasattr(p, "extremal_many"):
        bundle["solution_extremals"] = _solution_extremals(p)
    return bundle


def _solution_extremals(p):
    return {name: float(p.extremal_many(u[None])[0])
            for name, u in p.reference_solutions().items()}


def comparison_rows(bundle):
    """Flatten a comparison bundle to CSV rows ``method,index,t,x...``."""
    rows = []
    for method in ("classical", "adaptive", "flow"):
        d = bundle[method]
        its = d["iterates"]
        if method == "flow":
            tvals = d["times"]
        else:
            tvals = [0.0] + list(np.cumsum([v for v in d["steps"]]))
        ext = d.get("extremal")
        for k, x in enumerate(its):
            if ext is not None:
                coords = [ext[k]]
            else:
                coords = list(x)
            rows.append([method, k, tvals[k]] + coords)
    return rows


def dumps_bundle(bundle):
    return json.dumps(bundle, indent=1, allow_nan=False)
