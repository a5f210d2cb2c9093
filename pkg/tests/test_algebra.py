import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transport_ar import (
    DomainError,
    Grid,
    GridMismatchError,
    ProbGrid,
    TransportBatch,
    TransportMap,
    circledcirc,
    d1,
    d_dalpha_odot,
    d_dx_odot,
    dsup,
    identity,
    inverse,
    odot,
    odot_apply,
    ominus,
    oplus,
    pushforward,
    uniform,
)

FINE = Grid(0.0, 1.0, 1001)


def random_map(seed, grid=FINE):
    # smooth random transport: a mixture of power maps
    r = np.random.default_rng(seed)
    w = r.dirichlet(np.ones(3))
    powers = r.uniform(0.4, 2.5, 3)
    return TransportMap.from_callable(grid, lambda x: sum(wi * x**pi for wi, pi in zip(w, powers)))


def sin_map(grid=FINE, k=2):
    return TransportMap.from_callable(grid, lambda x: x - np.sin(np.pi * k * x) / (abs(k) * np.pi))


def test_transport_map_pins_endpoints(grid):
    t = TransportMap(grid, grid.nodes * 0.5 + 0.1)
    assert t.values[0] == 0.0 and t.values[-1] == 1.0


def test_identity_helpers(grid):
    ident = identity(grid)
    assert ident.is_identity()
    assert np.all(ident.displacement() == 0)
    assert inverse(ident).is_identity(1e-15)


# -- oplus ------------------------------------------------------------------


def test_oplus_applies_first_argument_first():
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    s = sin_map()
    out = oplus(sq, s)
    x = FINE.nodes
    expected = x**2 - np.sin(2 * np.pi * x**2) / (2 * np.pi)
    assert np.max(np.abs(out.values - expected)) < 1e-5


def test_oplus_is_not_commutative():
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    s = sin_map()
    assert dsup(oplus(sq, s), oplus(s, sq)) > 0.05


def test_oplus_identity_and_inverse():
    t = random_map(1)
    ident = identity(FINE)
    assert dsup(oplus(t, ident), t) < 1e-14
    assert dsup(oplus(ident, t), t) < 1e-14
    assert dsup(oplus(t, inverse(t)), ident) < 5e-3


def test_oplus_grid_mismatch():
    with pytest.raises(GridMismatchError):
        oplus(identity(Grid(0, 1, 11)), identity(Grid(0, 1, 12)))


# -- odot -------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.0, 0.3, -0.6, 1.0, -1.0, 1.5, -2.25])
def test_odot_of_identity_is_identity(alpha, grid):
    assert odot(alpha, identity(grid)).is_identity(1e-14)


def test_odot_closed_forms():
    x = FINE.nodes
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    assert np.max(np.abs(odot(0.6, sq).values - (x + 0.6 * (x**2 - x)))) < 1e-15
    assert np.max(np.abs(odot(1.5, sq).values - (0.5 * x**2 + 0.5 * x**4))) < 1e-6
    assert np.max(np.abs(odot(-0.5, sq).values - (0.5 * x + 0.5 * np.sqrt(x)))) < 1e-3
    assert np.max(np.abs(odot(2.0, sq).values - x**4)) < 1e-6
    assert dsup(odot(0.0, sq), identity(FINE)) == 0.0
    assert dsup(odot(1.0, sq), sq) < 1e-15
    assert dsup(odot(-1.0, sq), inverse(sq)) < 1e-15


def test_odot_apply_matches_tabulation_at_nodes():
    t = random_map(3)
    for alpha in (0.4, -0.8, 1.7, -1.3):
        assert np.allclose(odot_apply(alpha, t, FINE.nodes), odot(alpha, t).values, atol=1e-12)
    assert isinstance(odot_apply(0.5, t, 0.3), float)
    with pytest.raises(DomainError):
        odot_apply(0.5, t, 1.5)


@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_sign_symmetry(seed, alpha):
    # (-a) ⊙ T equals a ⊙ T^{-1} for a in (0, 1]
    t = random_map(seed)
    assert dsup(odot(-alpha, t), odot(alpha, inverse(t))) < 1e-12


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_d1_scales_linearly_on_the_unit_interval(seed, alpha):
    t = random_map(seed)
    ident = identity(FINE)
    assert d1(odot(alpha, t), ident) == pytest.approx(alpha * d1(t, ident), abs=1e-12)


@given(st.integers(0, 10_000), st.floats(-3.0, 3.0))
def test_odot_stays_in_group(seed, alpha):
    t = random_map(seed, Grid(0.0, 1.0, 201))
    v = odot(alpha, t).values
    assert v[0] == 0.0 and v[-1] == 1.0
    assert np.all(np.diff(v) >= 0)


# -- circledcirc ------------------------------------------------------------


def test_circledcirc_closed_form():
    x = FINE.nodes
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    out = circledcirc(x, sq)
    assert np.max(np.abs(out.values - (x - x**2 + x**3))) < 1e-15


def test_circledcirc_constant_matches_odot():
    t = random_map(5)
    for b in (0.7, -0.4, 0.0):
        assert dsup(circledcirc(b, t), odot(b, t)) < 1e-14


def test_circledcirc_flags_projection():
    x = FINE.nodes
    t = TransportMap.from_callable(FINE, lambda x: x**3)
    beta = np.where(x < 0.5, -1.0, 1.0)
    out, projected = circledcirc(beta, t, return_projected=True)
    assert projected
    assert np.all(np.diff(out.values) >= 0)
    _, projected = circledcirc(0.5, t, return_projected=True)
    assert not projected


def test_circledcirc_rejects_large_coefficients(grid):
    with pytest.raises(ValueError):
        circledcirc(1.5, identity(grid))


# -- derivatives ------------------------------------------------------------


def test_derivative_examples():
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    assert d_dalpha_odot(0.5, sq, 0.5) == pytest.approx(-0.25, abs=1e-12)
    assert d_dalpha_odot(1.5, sq, 0.5) == pytest.approx(-0.1875, abs=1e-6)
    assert d_dx_odot(0.5, sq, 0.5) == pytest.approx(1.0, abs=1e-3)


def test_d_dx_negative_alpha_chain_rule():
    # with T = x^2, (-0.5) ⊙ T = 0.5x + 0.5 sqrt(x), derivative 0.5 + 0.25/sqrt(x)
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    assert d_dx_odot(-0.5, sq, 0.25) == pytest.approx(0.5 + 0.25 / 0.5, abs=5e-3)


def test_subgradient_at_zero():
    sq = TransportMap.from_callable(FINE, lambda x: x**2)
    plus = 0.25 - 0.5
    minus = 0.5 - np.sqrt(0.5)
    mid = d_dalpha_odot(0.0, sq, 0.5)
    assert mid == pytest.approx(0.5 * (plus + minus), abs=1e-3)
    rng = np.random.default_rng(0)
    draws = {round(float(d_dalpha_odot(0.0, sq, 0.5, rng)), 3) for _ in range(40)}
    assert draws == {round(plus, 3), round(minus, 3)}


@given(st.integers(0, 10_000), st.floats(-2.9, 2.9).filter(lambda a: abs(a - round(a)) > 0.05),
       st.floats(0.1, 0.9))
def test_derivatives_match_finite_differences(seed, alpha, x):
    t = random_map(seed)
    eps = 1e-4
    fd_a = (odot_apply(alpha + eps, t, x) - odot_apply(alpha - eps, t, x)) / (2 * eps)
    assert d_dalpha_odot(alpha, t, x) == pytest.approx(fd_a, abs=1e-6)
    # x-derivative uses node slopes, so allow the tabulation error
    fd_x = (odot_apply(alpha, t, x + 1e-3) - odot_apply(alpha, t, x - 1e-3)) / 2e-3
    assert d_dx_odot(alpha, t, x) == pytest.approx(fd_x, rel=0.05, abs=0.02)


def test_jet_matches_separate_derivatives():
    batch = TransportBatch.from_maps([random_map(s, Grid(0, 1, 101)) for s in range(4)])
    X = np.random.default_rng(1).uniform(0, 1, (4, 7))
    for alpha in (0.3, -0.7, 1.4, -2.6):
        dx, da = batch.jet(alpha, X)
        assert np.allclose(dx, batch.d_dx(alpha, X))
        assert np.allclose(da, batch.d_dalpha(alpha, X))


def test_batch_rows_match_single_maps():
    maps = [random_map(s, Grid(0, 1, 101)) for s in range(3)]
    batch = TransportBatch.from_maps(maps)
    X = np.tile(np.linspace(0, 1, 9), (3, 1))
    out = batch.apply(-1.3, X)
    for i, t in enumerate(maps):
        assert np.allclose(out[i], odot_apply(-1.3, t, X[i]))
    assert len(batch[1:]) == 2
    assert np.allclose(batch.maps()[2].values, maps[2].values)


def test_batch_shape_check(grid):
    with pytest.raises(ValueError):
        TransportBatch(grid, np.zeros((2, 5)))


# -- distributions ----------------------------------------------------------


def test_ominus_uniform_to_square(grid):
    prob = ProbGrid(201)
    mu1 = uniform(grid, prob)
    mu2 = mu1.with_quantile_closed(prob.closed_levels**2)
    t = ominus(mu2, mu1)
    assert np.max(np.abs(t.values - grid.nodes**2)) < 1e-4


def test_ominus_pushforward_round_trip(grid):
    prob = ProbGrid(201)
    mu1 = uniform(grid, prob, 0.1, 0.8)
    mu2 = mu1.with_quantile_closed(0.05 + 0.9 * prob.closed_levels**1.5)
    back = pushforward(ominus(mu2, mu1), mu1)
    assert np.max(np.abs(back.closed_quantile - mu2.closed_quantile)) < 5e-3


def test_ominus_self_is_identity(grid):
    mu = uniform(grid, ProbGrid(99), 0.0, 1.0)
    assert ominus(mu, mu).is_identity(1e-12)


def test_pushforward_support_mismatch(grid):
    mu = uniform(Grid(0, 2, 101), ProbGrid(11))
    with pytest.raises(GridMismatchError):
        pushforward(identity(grid), mu)
