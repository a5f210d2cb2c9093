import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transport_ar.grid import (
    DomainError,
    Grid,
    GridMismatchError,
    MonotoneFn,
    ProbGrid,
    enforce_monotone,
    integrate,
    interp_rows,
    invert_rows,
    invert_values,
    isotonic_projection,
    natural_cubic_spline,
)


def increasing_values(m):
    # strictly increasing tabulation of a random map of [0, 1] onto itself
    def build(steps):
        v = np.concatenate(([0.0], np.cumsum(steps) / np.sum(steps)))
        v[-1] = 1.0
        return np.minimum(v, 1.0)

    return st.lists(st.floats(0.05, 1.0), min_size=m - 1, max_size=m - 1).map(build)


def test_grid_nodes_and_spacing():
    g = Grid(-1.0, 3.0, 5)
    assert g.nodes.tolist() == [-1.0, 0.0, 1.0, 2.0, 3.0]
    assert g.spacing == 1.0
    assert g.width == 4.0
    assert not g.nodes.flags.writeable


@pytest.mark.parametrize("args", [(1.0, 1.0, 5), (1.0, 0.0, 5), (0.0, 1.0, 1), (0.0, 1.0, 2.5)])
def test_grid_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_probgrid_default_levels():
    p = ProbGrid(3)
    assert np.allclose(p.levels, [0.25, 0.5, 0.75])
    assert p.closed_levels.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert ProbGrid(201).levels[0] == pytest.approx(1 / 202)


@pytest.mark.parametrize("levels", [[0.0, 0.5], [0.5, 0.4], [0.2, 1.0], []])
def test_probgrid_rejects_bad_levels(levels):
    with pytest.raises(ValueError):
        ProbGrid(levels=levels)


def test_probgrid_equality_by_levels():
    assert ProbGrid(5) == ProbGrid(levels=np.arange(1, 6) / 6)
    assert ProbGrid(5) != ProbGrid(6)


# -- eval -------------------------------------------------------------------


def test_eval_identity(grid):
    assert MonotoneFn.identity(grid).eval(0.37) == pytest.approx(0.37)


def test_eval_exact_at_nodes_and_linear_between(grid):
    f = MonotoneFn.from_callable(grid, lambda x: x**2)
    assert f.eval(0.5) == pytest.approx(0.25, abs=1e-15)
    assert f.eval(0.505) == pytest.approx(0.5 * (0.25 + 0.2601), abs=1e-15)


def test_eval_outside_domain_raises(grid):
    f = MonotoneFn.identity(grid)
    with pytest.raises(DomainError):
        f.eval(1.01)
    with pytest.raises(DomainError):
        f(np.array([0.2, -0.1]))


# -- invert -----------------------------------------------------------------


def test_invert_identity(grid):
    assert MonotoneFn.identity(grid).invert(0.42) == pytest.approx(0.42)


def test_invert_flat_segment_returns_left_edge():
    f = MonotoneFn(Grid(0.0, 1.0, 4), np.array([0.0, 0.5, 0.5, 1.0]))
    assert f.invert(0.5) == pytest.approx(1 / 3)


def test_invert_square(grid):
    f = MonotoneFn.from_callable(grid, lambda x: x**2)
    assert f.invert(0.25) == pytest.approx(0.5, abs=2 * grid.spacing)


def test_invert_out_of_range_raises(grid):
    f = MonotoneFn.from_callable(grid, lambda x: 0.5 * x)
    with pytest.raises(DomainError):
        f.invert(0.6)


@given(increasing_values(31), st.floats(0.0, 1.0))
def test_eval_of_invert_recovers_level(values, y):
    f = MonotoneFn(Grid(0.0, 1.0, 31), values)
    x = f.invert(y)
    assert f.eval(x) >= y - 1e-12
    assert f.eval(x) == pytest.approx(y, abs=1e-9)


@given(increasing_values(41))
def test_double_inversion_reproduces_function(values):
    g = Grid(0.0, 1.0, 41)
    inv = invert_values(g.nodes, values, g.nodes)
    back = invert_values(g.nodes, inv, g.nodes)
    # each inversion costs at most one grid step in sup norm
    assert np.max(np.abs(back - values)) <= 10 * g.spacing


@given(st.lists(increasing_values(21), min_size=1, max_size=5), st.floats(0.0, 1.0))
def test_invert_rows_matches_rowwise(rows, y):
    g = Grid(0.0, 1.0, 21)
    V = np.array(rows)
    Y = np.full((len(rows), 3), y)
    Y[:, 1] = 0.5 * y
    out = invert_rows(g.nodes, V, Y)
    for i, r in enumerate(V):
        assert np.allclose(out[i], invert_values(g.nodes, r, Y[i]))


@given(st.lists(increasing_values(21), min_size=1, max_size=5),
       st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6))
def test_interp_rows_matches_numpy(rows, xs):
    g = Grid(0.0, 1.0, 21)
    V = np.array(rows)
    X = np.tile(xs, (len(rows), 1))
    out = interp_rows(V, X, g.s1, g.spacing)
    for i, r in enumerate(V):
        assert np.allclose(out[i], np.interp(xs, g.nodes, r))


# -- compose ----------------------------------------------------------------


def test_compose_with_identity(grid, square):
    ident = MonotoneFn.identity(grid)
    f = MonotoneFn(grid, square.values)
    assert ident.compose(f).sup_distance(f) < 1e-15
    assert f.compose(ident).sup_distance(f) < 1e-15


def test_compose_square_with_itself(grid):
    f = MonotoneFn.from_callable(grid, lambda x: x**2)
    assert np.max(np.abs(f.compose(f).values - grid.nodes**4)) <= 10 * grid.spacing


def test_compose_grid_mismatch():
    a = MonotoneFn.identity(Grid(0, 1, 11))
    b = MonotoneFn.identity(Grid(0, 1, 21))
    with pytest.raises(GridMismatchError):
        a.compose(b)


@given(increasing_values(51), increasing_values(51), increasing_values(51))
def test_compose_associative(a, b, c):
    g = Grid(0.0, 1.0, 51)
    f, gg, h = (MonotoneFn(g, v) for v in (a, b, c))
    left = f.compose(gg).compose(h)
    right = f.compose(gg.compose(h))
    assert left.sup_distance(right) <= 10 * g.spacing


# -- integrate --------------------------------------------------------------


def test_integrate_oracles(grid):
    x = grid.nodes
    assert integrate(np.ones_like(x), grid=grid) == 1.0
    assert integrate(x, grid=grid) == pytest.approx(0.5, abs=1e-15)
    assert integrate(x**2, grid=grid) == pytest.approx(1 / 3, abs=1e-4)


@given(st.lists(st.floats(-5, 5), min_size=11, max_size=11),
       st.lists(st.floats(-5, 5), min_size=11, max_size=11), st.floats(-3, 3))
def test_integrate_linear(a, b, c):
    a, b = np.array(a), np.array(b)
    lhs = integrate(a + c * b, h=0.1)
    assert lhs == pytest.approx(integrate(a, h=0.1) + c * integrate(b, h=0.1), abs=1e-9)
    assert integrate(np.abs(a), h=0.1) >= 0


def test_integrate_needs_spacing():
    with pytest.raises(TypeError):
        integrate([1.0, 2.0])


# -- projections ------------------------------------------------------------


def test_enforce_monotone_examples():
    assert enforce_monotone([0, 0.2, 0.1, 1]).tolist() == [0, 0.2, 0.2, 1]
    v = np.array([0.0, 0.3, 0.6, 1.0])
    assert np.array_equal(enforce_monotone(v), v)
    out = enforce_monotone([1.0, 0.0, 0.5, 0.2], 0.0, 0.8)
    assert np.all(np.diff(out) >= 0) and out.max() <= 0.8


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_projections_idempotent_and_monotone(v):
    once = enforce_monotone(v, -5, 5)
    assert np.array_equal(enforce_monotone(once, -5, 5), once)
    iso = isotonic_projection(v)
    assert np.all(np.diff(iso) >= -1e-12)
    assert np.allclose(isotonic_projection(iso), iso)


def test_isotonic_projection_is_least_squares():
    # pooling the violating pair gives their mean
    assert np.allclose(isotonic_projection([0.0, 0.6, 0.4, 1.0]), [0.0, 0.5, 0.5, 1.0])


# -- derivative -------------------------------------------------------------


def test_derivative_examples(grid, fine_grid):
    assert np.allclose(MonotoneFn.identity(grid).derivative(grid.nodes), 1.0)
    f = MonotoneFn.from_callable(fine_grid, lambda x: x**2)
    assert f.derivative(0.5) == pytest.approx(1.0, abs=1e-3)
    flat = MonotoneFn.from_callable(grid, lambda x: np.clip(x, 0.3, 0.7))
    assert flat.derivative(0.1) == 0.0
    assert flat.derivative(0.9) == 0.0


# -- spline -----------------------------------------------------------------


def test_spline_collinear_points_give_identity(grid):
    f = natural_cubic_spline([(0, 0), (0.5, 0.5), (1, 1)], grid)
    assert np.allclose(f.values, grid.nodes, atol=1e-12)


def test_spline_passes_through_knots():
    s = natural_cubic_spline([(0, 0), (0.33, 0.7), (0.66, 0.8), (1, 1)])
    assert float(s(0.33)) == pytest.approx(0.7, abs=1e-12)
    assert float(s(0.66)) == pytest.approx(0.8, abs=1e-12)
    # natural boundary conditions
    assert float(s(0.0, 2)) == pytest.approx(0.0, abs=1e-9)
    assert float(s(1.0, 2)) == pytest.approx(0.0, abs=1e-9)


def test_spline_is_monotone_on_fine_grid():
    g = Grid(0.0, 1.0, 1001)
    f = natural_cubic_spline([(0, 0), (0.33, 0.7), (0.66, 0.8), (1, 1)], g)
    assert np.all(np.diff(f.values) >= 0)
    assert f.values[0] == 0.0 and f.values[-1] == 1.0


@pytest.mark.parametrize("pts", [[(0, 0), (1, 1)], [(0, 0), (0.5, 0.2), (0.5, 0.6), (1, 1)]])
def test_spline_rejects_bad_points(pts):
    with pytest.raises(ValueError):
        natural_cubic_spline(pts)
