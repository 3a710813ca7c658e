import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from newtonlab import (
    NonlinearProblem,
    SingularJacobian,
    SolverConfig,
    Status,
    adaptive_step,
    error_indicator,
    flow,
    make_problem,
    newton_step,
    nrt,
    solve,
)
from newtonlab.linalg import DenseMatrix
from newtonlab.pde2d import PdeProblem

CRIT = math.sqrt(2.0 / 3.0)
CUBIC_ROOTS = np.array([[2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]])


@pytest.fixture(scope="module")
def cubic():
    return make_problem("cubic")


def affine(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return NonlinearProblem(len(b), residual=lambda x: a @ x - b,
                            jacobian=lambda x: DenseMatrix(a), name="affine")


def nearest_root(x):
    return int(np.argmin(np.linalg.norm(CUBIC_ROOTS - x, axis=1)))


# -- step formula -----------------------------------------------------------

@pytest.mark.parametrize("tau, size, expected", [
    (0.1, 0.2, 1.0),
    (0.1, 0.8, 0.5),
    (0.05, 0.0, 1.0),
])
def test_adaptive_step_examples(tau, size, expected):
    assert adaptive_step(tau, size) == pytest.approx(expected, abs=1e-15)


@given(st.floats(1e-8, 10.0), st.floats(0.0, 1e6))
def test_adaptive_step_range_and_unit_condition(tau, size):
    t = adaptive_step(tau, size)
    assert 0 < t <= 1
    assert (t == 1.0) == (size <= 2 * tau)


def test_adaptive_step_rejects_bad_tau():
    with pytest.raises(ValueError):
        adaptive_step(0.0, 1.0)


def test_vectorised_steps_match_scalar():
    cfg = SolverConfig.adaptive(0.3)
    sizes = np.array([0.0, 0.1, 0.6, 0.61, 5.0, 1e9])
    assert np.array_equal(cfg.step_sizes(sizes), [adaptive_step(0.3, s) for s in sizes])


# -- error indicator --------------------------------------------------------

def test_error_indicator_vanishes_at_zero_time():
    assert error_indicator(np.array([3.0, 4.0]), 0.0) == 0.0


def test_error_indicator_unit_time():
    assert error_indicator(np.array([2.0, 0.0]), 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-12)


def test_error_indicator_taylor():
    v = error_indicator(np.array([0.0, 2.0]), 0.1)
    assert v == pytest.approx(0.009674, abs=1e-6)
    assert abs(v - 0.01) / 0.01 < 0.05


@given(st.floats(0, 50), st.floats(0, 100))
def test_error_indicator_bounds(t, size):
    v = error_indicator(np.array([size]), t)
    assert 0 <= v <= size * t * t / 2 + 1e-12


# -- Newton-Raphson transform -----------------------------------------------

def test_nrt_at_root(cubic):
    assert np.allclose(nrt(cubic, [2.0, 0.0]), 0.0, atol=0)


def test_nrt_at_origin(cubic):
    assert np.allclose(nrt(cubic, [0.0, 0.0]), [-2.0, 0.0], atol=1e-15)


def test_nrt_at_critical_point(cubic):
    with pytest.raises(SingularJacobian):
        nrt(cubic, [CRIT, 0.0])


def test_nrt_non_finite_residual_is_singular():
    p = make_problem("bratu:n=10")
    with pytest.raises(SingularJacobian):
        nrt(p, np.full(p.dim, 800.0))


# -- damped step ------------------------------------------------------------

@given(st.sampled_from(range(3)), st.floats(1e-6, 1.0))
def test_newton_step_fixes_roots(k, t):
    p = make_problem("cubic")
    assert np.array_equal(newton_step(p, CUBIC_ROOTS[k], t), CUBIC_ROOTS[k])


def test_newton_step_from_origin(cubic):
    assert np.allclose(newton_step(cubic, [0.0, 0.0], 1.0), [-2.0, 0.0], atol=1e-15)


@given(arrays(float, (3, 3), elements=st.floats(-2, 2)),
       arrays(float, 3, elements=st.floats(-5, 5)),
       arrays(float, 3, elements=st.floats(-5, 5)),
       st.floats(0.01, 1.0))
def test_affine_exactness(a, b, x, t):
    a = a + 5.0 * np.eye(3)
    p = affine(a, b)
    x_new = newton_step(p, x, t)
    scale = 1.0 + np.abs(a).sum() * (1.0 + np.abs(x).max() + np.abs(x_new).max())
    assert np.allclose(p.residual(x_new), (1 - t) * p.residual(x), atol=1e-12 * scale)
    if t == 1.0:
        assert np.allclose(x_new, np.linalg.solve(a, b), atol=1e-12 * scale)


def test_newton_step_rejects_bad_t(cubic):
    with pytest.raises(ValueError):
        newton_step(cubic, [1.0, 1.0], 0.0)


# -- solver -----------------------------------------------------------------

def test_solve_from_root(cubic):
    tr = solve(cubic, [2.0, 0.0], SolverConfig.adaptive(0.1))
    assert tr.status is Status.CONVERGED
    assert tr.iterations <= 1
    assert np.array_equal(tr.final, [2.0, 0.0])


def test_solve_from_critical_point(cubic):
    tr = solve(cubic, [CRIT, 0.0], SolverConfig.classical())
    assert tr.status is Status.SINGULAR
    assert tr.iterations == 0


def test_adaptive_follows_flow_where_classical_jumps(cubic):
    x0 = [0.08, 0.55]
    classical = solve(cubic, x0, SolverConfig.classical())
    adaptive = solve(cubic, x0, SolverConfig.adaptive(0.05))
    reference = flow(cubic, x0, dt=1e-3)
    assert classical.converged and adaptive.converged and reference.reached
    target = nearest_root(reference.final)
    assert nearest_root(adaptive.final) == target
    assert nearest_root(classical.final) != target


def test_solve_trace_lengths(cubic):
    tr = solve(cubic, [3.0, 2.0], SolverConfig.adaptive(0.1))
    assert len(tr.iterates) == len(tr.steps) + 1 == len(tr.residual_norms)
    assert len(tr.update_norms) == len(tr.steps)
    assert all(0 < t <= 1 for t in tr.steps)


def test_solve_max_iters(cubic):
    tr = solve(cubic, [3.0, 2.0], SolverConfig.adaptive(1e-4, max_iters=3))
    assert tr.status is Status.MAX_ITERS and tr.iterations == 3


def test_solve_blowup():
    # undamped Newton on atan overshoots with growing amplitude from |x0| > 1.39
    p = NonlinearProblem(1, residual=np.arctan,
                         jacobian=lambda x: DenseMatrix([[1.0 / (1.0 + x[0] ** 2)]]))
    tr = solve(p, [2.0], SolverConfig.classical(blowup_norm=1e6))
    assert tr.status is Status.BLOWUP


def test_solve_left_domain():
    p = NonlinearProblem(1, residual=lambda x: x - 3.0,
                         jacobian=lambda x: DenseMatrix([[1.0]]),
                         in_domain=lambda x: abs(x[0]) <= 1.0)
    assert solve(p, [0.0], SolverConfig.classical()).status is Status.LEFT_DOMAIN


def test_trace_json_schema(cubic):
    tr = solve(cubic, [1.0, 1.0], SolverConfig.adaptive(0.1))
    doc = json.loads(tr.to_json())
    assert set(doc) == {"problem", "mode", "tau", "iterates", "steps",
                        "residual_norms", "update_norms", "status"}
    assert doc["problem"] == "cubic" and doc["status"] == "Converged"
    doc = solve(cubic, [1.0, 1.0], SolverConfig.fixed(0.5)).to_dict()
    assert doc["t"] == 0.5


@pytest.mark.parametrize("spec, mode", [
    ("classical", "classical"), ("fixed:0.72", "fixed"), ("adaptive:0.1", "adaptive"),
])
def test_config_parse(spec, mode):
    cfg = SolverConfig.parse(spec)
    assert cfg.mode == mode and cfg.label == spec


@pytest.mark.parametrize("spec", ["adaptive:-1", "adaptive:0", "fixed:1.5", "fixed:0",
                                  "newton", "adaptive", "adaptive:x", "classical:1",
                                  "adaptive:nan"])
def test_config_parse_rejects(spec):
    with pytest.raises(ValueError):
        SolverConfig.parse(spec)


@given(st.floats(-4, 4), st.floats(-4, 4))
def test_quadratic_tail(x, y):
    p = make_problem("cubic")
    assume(min(np.hypot(x - CRIT, y), np.hypot(x + CRIT, y)) > 0.05)
    tr = solve(p, [x, y], SolverConfig.adaptive(0.1))
    assume(tr.converged)
    root = CUBIC_ROOTS[nearest_root(tr.final)]
    errs = [np.linalg.norm(v - root) for v in tr.iterates]
    tail = [e for e in errs if e > 1e-12]
    assert tr.steps[-1] == 1.0
    if len(tail) >= 3 and tr.steps[-2] == 1.0:
        e0, e1, e2 = tail[-3:]
        c = max(e1 / e0 ** 2, e2 / e1 ** 2)
        assert math.isfinite(c) and c < 10.0


@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(1e-6, 0.5))
def test_first_step_follows_field(x, y, tau):
    p = make_problem("cubic")
    assume(min(np.hypot(x - CRIT, y), np.hypot(x + CRIT, y)) > 1e-3)
    tr = solve(p, [x, y], SolverConfig.adaptive(tau, max_iters=1))
    assume(tr.steps)
    direction = (tr.iterates[1] - tr.iterates[0]) / tr.steps[0]
    assert np.allclose(direction, nrt(p, [x, y]), rtol=1e-12, atol=1e-12)


# -- flow -------------------------------------------------------------------

def test_flow_from_root(cubic):
    traj = flow(cubic, [2.0, 0.0])
    assert len(traj.states) == 1 and traj.reached
    assert all(r <= 1e-8 for r in traj.residual_norms)


def test_flow_affine_geometric_decay():
    a = np.array([1.5, -0.5])
    p = affine(np.eye(2), a)
    x0 = np.array([4.0, 3.0])
    traj = flow(p, x0, dt=0.1, t_max=2.0, residual_stop=1e-12)
    r0 = np.linalg.norm(x0 - a)
    for k, r in enumerate(traj.residual_norms):
        assert r == pytest.approx(0.9 ** k * r0, rel=1e-12)
    assert np.allclose(np.diff(traj.times), 0.1)


def test_flow_exponential_decay_and_endpoint(cubic):
    x0 = [0.08, 0.55]
    traj = flow(cubic, x0, dt=1e-3, t_max=50.0)
    r = np.asarray(traj.residual_norms)
    t = np.asarray(traj.times)
    keep = t <= 5.0
    ratio = r[keep] / r[0] / np.exp(-t[keep])
    assert ratio.min() >= 0.98 and ratio.max() <= 1.02
    assert np.min(np.linalg.norm(CUBIC_ROOTS - traj.final, axis=1)) <= 1e-6


def test_flow_stops_at_critical_point(cubic):
    traj = flow(cubic, [CRIT, 0.0])
    assert len(traj.states) == 1 and not traj.reached


def test_flow_nrt_stop(cubic):
    traj = flow(cubic, [3.0, 1.0], nrt_stop=1e-3)
    assert traj.settled and traj.reached
    assert np.min(np.linalg.norm(CUBIC_ROOTS - traj.final, axis=1)) < 2e-3


def test_flow_json(cubic):
    doc = json.loads(flow(cubic, [1.0, 1.0]).to_json())
    assert doc["mode"] == "flow" and doc["status"] == "Converged"


def test_flow_rejects_bad_dt(cubic):
    with pytest.raises(ValueError):
        flow(cubic, [1.0, 1.0], dt=2.0)


# -- Jacobians of every shipped problem against finite differences -----------

def _problems():
    return [
        ("cubic", make_problem("cubic"), 3.0),
        ("expsin", make_problem("expsin"), 1.5),
        ("cubic-bvp", make_problem("cubic-bvp:n=12"), 3.0),
        ("bratu", make_problem("bratu:n=12"), 2.0),
        ("cubic-pde", PdeProblem(6, labels=False), 4.0),
    ]


@pytest.mark.parametrize("name, p, scale", _problems(), ids=lambda v: v if isinstance(v, str) else "")
def test_jacobian_matches_finite_differences(name, p, scale):
    rng = np.random.default_rng(11)
    eps = 1e-6
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-scale, scale, p.dim)
        jac = p.jacobian(x)
        jac = jac.to_dense() if hasattr(jac, "to_dense") else np.asarray(jac)
        fd = np.empty_like(jac)
        for k in range(p.dim):
            e = np.zeros(p.dim)
            e[k] = eps
            fd[:, k] = (p.residual(x + e) - p.residual(x - e)) / (2 * eps)
        worst = max(worst, np.abs(fd - jac).max() / max(1.0, np.abs(jac).max()))
    assert worst <= 1e-6
