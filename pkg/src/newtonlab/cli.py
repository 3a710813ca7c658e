"""
Command line front end.

    newtonlab solve   --problem cubic --x0 0.08,0.55 --mode adaptive:0.05
    newtonlab flow    --problem cubic --x0 0.08,0.55 --dt 1e-3
    newtonlab basin   --problem cubic --mode classical --out b.ppm --stats s.csv
    newtonlab table   --problem expsin --modes classical,adaptive:0.1
    newtonlab field   --problem cubic --kind nrt --out field.csv
    newtonlab compare --problem cubic-bvp --x0 0.5,-2.405 --tau 0.5 --out c.json

Exit status is 0 on success, 2 for usage errors and 1 when a run fails.
"""
import argparse
import csv
import json
import math
import sys

from . import basin as bl
from .core import SolverConfig, flow, solve
from .registry import DEFAULT_RESOLUTION, PAPER_RESOLUTION, canonical_id, family, make_problem

__all__ = ["main", "run", "build_parser"]


class UsageError(Exception):
    pass


def _floats(text, count=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"{name} needs {count} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{name} must be finite")
    return vals


def _ints(text, count, name):
    vals = _floats(text, count, name)
    if any(v != int(v) or v < 2 for v in vals):
        raise UsageError(f"{name} needs integers >= 2")
    return [int(v) for v in vals]


def _problem(args):
    try:
        pid = canonical_id(args.problem)
        if getattr(args, "slice", None) is not None:
            if not pid.startswith("cubic-pde"):
                raise UsageError("--slice only applies to cubic-pde")
            n = int(pid.partition("=")[2].partition(",")[0])
            pid = canonical_id(f"cubic-pde:n={n},j={_slice_index(args.slice, n)}")
        return pid, make_problem(pid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _slice_index(text, n):
    named = {"mid": n // 2, "quarter": n // 4, "top": n - 1}
    if text in named:
        return max(1, named[text])
    try:
        j = int(text)
    except ValueError:
        raise UsageError(f"--slice must be mid, quarter, top or an index, got {text!r}") from None
    if not 1 <= j <= n - 1:
        raise UsageError(f"--slice index must lie in 1..{n - 1}")
    return j


def _mode(text, p, max_iters=None):
    iters = p.default_max_iters if max_iters is None else max_iters
    try:
        return SolverConfig.parse(text, max_iters=iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _threads(args):
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        return args.threads
    try:
        return bl.default_threads()
    except ValueError:
        raise UsageError("NEWTONLAB_THREADS must be an integer") from None


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)


def _start(p, args):
    point = _floats(args.x0, 2, "--x0")
    return point, p.initial_guess(*point)


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args):
    _, p = _problem(args)
    cfg = _mode(args.mode, p, args.max_iters)
    point, x0 = _start(p, args)
    tr = solve(p, x0, cfg)
    label = p.catalog.classify(tr.final) if tr.converged else None
    doc = tr.to_dict()
    doc["x0"] = point
    doc["label"] = label
    if args.out:
        _write(args.out, json.dumps(doc, indent=1) + "\n")
    elif args.json:
        print(json.dumps(doc, indent=1))
    print(f"{p.name} {cfg.label}: {tr.status} after {tr.iterations} iterations, "
          f"label {label or '-'}", file=sys.stderr if args.json and not args.out else sys.stdout)
    return 0


def cmd_flow(args):
    _, p = _problem(args)
    point, x0 = _start(p, args)
    if not 0 < args.dt <= 1:
        raise UsageError("--dt must lie in (0, 1]")
    traj = flow(p, x0, dt=args.dt, t_max=args.t_max, residual_stop=args.residual_stop)
    doc = traj.to_dict()
    doc["x0"] = point
    doc["label"] = p.catalog.classify(traj.final) if traj.reached else None
    if args.out:
        _write(args.out, json.dumps(doc, indent=1) + "\n")
    print(f"{p.name} flow dt={args.dt:g}: t={traj.times[-1]:g}, "
          f"|F|={traj.residual_norms[-1]:.3e}, label {doc['label'] or '-'}")
    return 0


def _plan(args, p, pid, mode):
    fam = family(p)
    if args.rect:
        rect = _floats(args.rect, 4, "--rect")
    else:
        rect = list(p.rect)
    if args.res:
        res = _ints(args.res, 2, "--res")
    else:
        res = list((PAPER_RESOLUTION if args.paper_scale else DEFAULT_RESOLUTION)[fam])
    if fam != "algebraic":
        step = args.amp_step
        if step is None and args.paper_scale and fam == "pde2d":
            step = 1.0 / p.grid.n
        if step is not None:
            if not step > 0:
                raise UsageError("--amp-step must be positive")
            res[1] = int(round((rect[3] - rect[2]) / step)) + 1
    elif args.amp_step is not None:
        raise UsageError("--amp-step only applies to boundary value problems")
    try:
        return bl.SamplingPlan(pid, rect, res, mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sample(args, plan):
    return bl.sample_basin(plan, threads=_threads(args))


def cmd_basin(args):
    pid, p = _problem(args)
    mode = _mode(args.mode, p, args.max_iters)
    plan = _plan(args, p, pid, mode)
    grid = _sample(args, plan)
    table = bl.aggregate(grid)
    if args.out:
        _write(args.out, bl.render_basin(grid, shade=args.shade, mark_roots=args.mark_roots))
    if args.stats:
        bl.write_stats_csv(table, args.stats)
    if args.cells:
        bl.write_cells_csv(grid, args.cells)
    print(bl.STATS_HEADER)
    print(table.row())
    print(f"# cells={table.cells} convergent={table.convergent} "
          f"converged_any={table.converged_any} wrong_zero={table.wrong_zero} "
          f"oracle_undefined={table.undefined}")
    return 0


TABLE_ROWS = (
    ("Average nr. of iterations", "avg_iterations", "{:.1f}"),
    ("Average step size", "avg_step_size", "{:.3f}"),
    ("% of convergent iterations", "pct_convergent", "{:.1f}%"),
    ("Average rate", "avg_rate", "{:.2f}"),
)


def format_table(columns):
    """Four-row text block, one column per ``(label, PerformanceTable)``."""
    width = max(len(r[0]) for r in TABLE_ROWS) + 2
    colw = max(14, max(len(c[0]) for c in columns) + 2)
    lines = [" " * width + "".join(f"{c[0]:>{colw}}" for c in columns)]
    for title, attr, fmt in TABLE_ROWS:
        cells = []
        for _, t in columns:
            v = getattr(t, attr)
            cells.append(f"{fmt.format(v) if math.isfinite(v) else 'n/a':>{colw}}")
        lines.append(f"{title:<{width}}" + "".join(cells))
    return "\n".join(lines)


def cmd_table(args):
    pid, p = _problem(args)
    columns = []
    for text in args.modes.split(","):
        mode = _mode(text.strip(), p, args.max_iters)
        plan = _plan(args, p, pid, mode)
        grid = _sample(args, plan)
        columns.append((mode.label, bl.aggregate(grid)))
    print(format_table(columns))
    if args.stats:
        with open(args.stats, "w") as fh:
            fh.write("mode," + bl.STATS_HEADER + "\n")
            for label, t in columns:
                fh.write(f"{label},{t.row()}\n")
    return 0


def cmd_field(args):
    _, p = _problem(args)
    if p.dim != 2:
        raise UsageError("field needs a planar problem (cubic or expsin)")
    rect = _floats(args.rect, 4, "--rect") if args.rect else list(getattr(p, "box", p.rect))
    res = _ints(args.res, 2, "--res") if args.res else [21, 21]
    text = bl.export_direction_field(p, rect, res, kind=args.kind)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args):
    _, p = _problem(args)
    point = _floats(args.x0, 2, "--x0")
    if not args.tau > 0:
        raise UsageError("--tau must be positive")
    bundle = bl.export_trajectory_comparison(p, point, tau=args.tau, dt=args.dt,
                                             max_iters=args.max_iters)
    summary = ", ".join(f"{k} -> {bundle[k]['label'] or '-'}"
                        for k in ("classical", "adaptive", "flow"))
    if args.out and args.out.endswith(".csv"):
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "index", "t", "value..."])
            w.writerows(bl.comparison_rows(bundle))
    elif args.out:
        _write(args.out, bl.dumps_bundle(bundle) + "\n")
    print(f"{p.name} from {tuple(point)}: {summary}")
    return 0


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    ap = _Parser(prog="newtonlab", description="Adaptive Newton method laboratory.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, x0=False, grid=False):
        sp.add_argument("--problem", required=True,
                        help="cubic, expsin, cubic-bvp[:n=N], bratu[:n=N], cubic-pde[:n=N]")
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--slice", default=None,
                        help="PDE hill row j: mid, quarter, top or an index")
        if x0:
            sp.add_argument("--x0", required=True,
                            help="start point in the sampling plane, e.g. 0.08,0.55")
        if grid:
            sp.add_argument("--rect", help="a,b,c,d")
            sp.add_argument("--res", help="nx,ny")
            sp.add_argument("--threads", type=int, default=None)
            sp.add_argument("--paper-scale", action="store_true",
                            help="use the published grid sizes")
            sp.add_argument("--amp-step", type=float, default=None,
                            help="amplitude spacing for boundary value problems")

    sp = sub.add_parser("solve", help="run one Newton iteration")
    common(sp, x0=True)
    sp.add_argument("--mode", default="adaptive:0.1")
    sp.add_argument("--out", help="write the trace as JSON")
    sp.add_argument("--json", action="store_true", help="print the trace as JSON")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("flow", help="integrate the continuous Newton flow")
    common(sp, x0=True)
    sp.add_argument("--dt", type=float, default=1e-2)
    sp.add_argument("--t-max", type=float, default=50.0)
    sp.add_argument("--residual-stop", type=float, default=1e-8)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("basin", help="sample a basin of attraction")
    common(sp, grid=True)
    sp.add_argument("--mode", default="adaptive:0.1")
    sp.add_argument("--out", help="PPM image")
    sp.add_argument("--stats", help="CSV statistics")
    sp.add_argument("--cells", help="per-cell CSV")
    sp.add_argument("--shade", action="store_true", help="darken slow cells")
    sp.add_argument("--mark-roots", action="store_true", help="circle the zeros")
    sp.set_defaults(func=cmd_basin)

    sp = sub.add_parser("table", help="performance table for several modes")
    common(sp, grid=True)
    sp.add_argument("--modes", default="classical,adaptive:0.1")
    sp.add_argument("--stats", help="CSV with one row per mode")
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("field", help="direction field of F or of the Newton field")
    common(sp)
    sp.add_argument("--kind", choices=("raw", "nrt"), default="nrt")
    sp.add_argument("--rect")
    sp.add_argument("--res")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_field)

    sp = sub.add_parser("compare", help="classical vs adaptive vs flow from one start")
    common(sp, x0=True)
    sp.add_argument("--tau", type=float, default=0.05)
    sp.add_argument("--dt", type=float, default=1e-2)
    sp.add_argument("--out", help=".json or .csv")
    sp.set_defaults(func=cmd_compare)
    return ap


_VECTOR_OPTIONS = ("--rect", "--x0")


def _attach_vectors(argv):
    # "--rect -5,5,-5,5" would read the value as a flag; bind it explicitly
    out, argv = [], list(argv)
    while argv:
        tok = argv.pop(0)
        if tok in _VECTOR_OPTIONS and argv:
            tok = f"{tok}={argv.pop(0)}"
        out.append(tok)
    return out


def run(argv=None):
    """Parse ``argv`` and dispatch; returns the exit status."""
    argv = _attach_vectors(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"newtonlab: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"newtonlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
