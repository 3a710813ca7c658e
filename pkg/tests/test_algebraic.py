import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from newtonlab import SolverConfig, make_problem, solve
from newtonlab.algebraic import (
    EXPSIN_BOX,
    RootCatalog,
    cubic_jacobian,
    cubic_residual,
    expsin_jacobian,
    expsin_residual,
    expsin_roots,
    expsin_singular_distance,
    expsin_singular_offsets,
)

coord = st.floats(-5, 5, allow_nan=False)
box_coord = st.floats(-1.5, 1.5, allow_nan=False)


# -- cubic ------------------------------------------------------------------

@pytest.mark.parametrize("root", [(2.0, 0.0), (-1.0, 1.0), (-1.0, -1.0)])
def test_cubic_zeros(root):
    assert np.array_equal(cubic_residual(root), [0.0, 0.0])


def test_cubic_constant_term():
    assert np.array_equal(cubic_residual([0.0, 0.0]), [-4.0, 0.0])


@given(coord, coord)
def test_cubic_matches_complex_arithmetic(a, b):
    z = complex(a, b)
    w = z ** 3 - 2 * z - 4
    assert np.allclose(cubic_residual([a, b]), [w.real, w.imag], rtol=1e-12, atol=1e-9)
    d = 3 * z * z - 2
    assert np.allclose(cubic_jacobian([a, b]).to_dense(),
                       [[d.real, -d.imag], [d.imag, d.real]], rtol=1e-12, atol=1e-9)


def test_cubic_jacobian_examples():
    assert np.allclose(cubic_jacobian([math.sqrt(2 / 3), 0.0]).to_dense(), 0.0, atol=1e-15)
    assert np.array_equal(cubic_jacobian([0.0, 0.0]).to_dense(), [[-2.0, 0.0], [0.0, -2.0]])
    assert np.array_equal(cubic_jacobian([1.0, 0.0]).to_dense(), [[1.0, 0.0], [0.0, 1.0]])


@given(coord, coord)
def test_cubic_conjugation_symmetry(a, b):
    f = cubic_residual([a, b])
    g = cubic_residual([a, -b])
    assert g[0] == f[0] and g[1] == -f[1]


@given(st.floats(-4, 4), st.floats(0.01, 4), st.sampled_from(["classical", "adaptive:0.1"]))
def test_cubic_conjugate_traces(a, b, mode):
    p = make_problem("cubic")
    cfg = SolverConfig.parse(mode)
    up = solve(p, [a, b], cfg)
    down = solve(p, [a, -b], cfg)
    assert up.status == down.status
    flip = np.array([1.0, -1.0])
    assert np.array_equal(np.array(up.iterates) * flip, np.array(down.iterates))


# -- exp / sin --------------------------------------------------------------

def test_expsin_origin():
    assert np.allclose(expsin_residual([0.0, 0.0]), [-2.0, 0.0], atol=0)


def test_expsin_six_roots():
    roots = np.array(expsin_roots())
    assert len(roots) == 6
    assert np.abs(roots).max() <= 1.5
    assert np.abs(expsin_residual(roots)).max() <= 1e-10
    # pairwise distinct
    d = np.linalg.norm(roots[:, None] - roots[None], axis=-1) + np.eye(6)
    assert d.min() > 0.1


def test_expsin_roots_by_dense_search():
    # independent oracle: sign changes of the second component along the
    # circle x^2 + y^2 = ln 3, where the first component vanishes
    r = math.sqrt(math.log(3.0))
    phi = np.linspace(0.0, 2 * math.pi, 200001)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    g = expsin_residual(pts)[:, 1]
    inside = np.all(np.abs(pts) <= 1.5, axis=1)
    crossings = np.flatnonzero((np.sign(g[:-1]) != np.sign(g[1:])) & inside[:-1])
    found = pts[crossings]
    roots = np.array(expsin_roots())
    assert len(found) == len(roots)
    for pt in found:
        assert np.linalg.norm(roots - pt, axis=1).min() < 1e-4


@given(box_coord)
def test_expsin_singular_on_diagonal(x):
    assert abs(np.linalg.det(expsin_jacobian([x, x]).to_dense())) <= 1e-10 * max(1.0, math.exp(2 * x * x))
    assert expsin_singular_distance([x, x]) == 0.0


def test_expsin_singular_lines():
    offsets = expsin_singular_offsets()
    assert offsets == sorted(offsets)
    base = math.acos(1 / 3) / 3
    assert any(abs(c - base) < 1e-15 for c in offsets)
    lo, hi = EXPSIN_BOX[0] + EXPSIN_BOX[2], EXPSIN_BOX[1] + EXPSIN_BOX[3]
    assert all(lo <= c <= hi for c in offsets)
    for c in offsets:
        for x in np.linspace(-1.5, 1.5, 13):
            y = c - x
            assert abs(np.linalg.det(expsin_jacobian([x, y]).to_dense())) <= 1e-10 * math.exp(x * x + y * y)


def test_expsin_singular_distance_examples():
    assert expsin_singular_distance([0.0, 0.0]) == 0.0
    y = -0.3 + math.acos(1 / 3) / 3
    assert expsin_singular_distance([0.3, y]) <= 1e-12


def test_expsin_determinant_away_from_lines():
    xs = np.linspace(-1.5, 1.5, 121)
    pts = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)
    far = pts[expsin_singular_distance(pts) >= 0.1]
    dets = np.linalg.det(np.stack([expsin_jacobian(x).to_dense() for x in far]))
    assert np.abs(dets).min() > 1e-3


# -- catalog ----------------------------------------------------------------

def test_catalog_matches_within_radius():
    cat = RootCatalog([("a", (0.0, 0.0)), ("b", (1.0, 0.0))], match_radius=1e-3)
    assert cat.classify([5e-4, 0.0]) == "a"
    assert cat.classify([1.0, 2e-3]) is None
    assert cat.classify([np.nan, 0.0]) is None


def test_catalog_rejects_close_roots():
    with pytest.raises(ValueError):
        RootCatalog([("a", (0.0, 0.0)), ("b", (1e-3, 0.0))], match_radius=1e-3)


def test_registry_problems():
    cubic = make_problem("cubic")
    assert len(cubic.catalog) == 3 and cubic.rect == (-5.0, 5.0, -5.0, 5.0)
    expsin = make_problem("expsin")
    assert len(expsin.catalog) == 6 and expsin.rect == (0.0, 1.5, -1.5, 0.0)
    assert make_problem("cubic") is cubic
    with pytest.raises(ValueError):
        make_problem("cubic:n=3")
    with pytest.raises(ValueError):
        make_problem("quartic")
