import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transport_ar import (
    DegenerateInputError,
    Distribution,
    Grid,
    GridMismatchError,
    ProbGrid,
    SampleBatch,
    frechet_mean,
    from_samples,
    lqd_inverse,
    rescale,
    truncated_gaussian,
    uniform,
    wasserstein_distance,
)
from transport_ar.distributions import cdf_rows, quantile_matrix


def test_uniform_quantile_and_moments(grid, prob):
    mu = uniform(grid, prob, 0.2, 0.6)
    assert mu.closed_quantile[0] == pytest.approx(0.2)
    assert mu.closed_quantile[-1] == pytest.approx(0.6)
    assert mu.mean() == pytest.approx(0.4)
    assert mu.variance() == pytest.approx(0.4**2 / 12, rel=1e-4)
    assert mu.median() == pytest.approx(0.4)


def test_cdf_inverts_quantile(grid, prob):
    mu = uniform(grid, prob, 0.2, 0.6)
    assert mu.cdf(0.1) == 0.0
    assert mu.cdf(0.4) == pytest.approx(0.5)
    assert mu.cdf(0.6) == 1.0
    assert mu.cdf(1.0) == 1.0


def test_cdf_rows_matches_scalar_cdf(prob):
    g = Grid(-3, 3, 61)
    dists = [truncated_gaussian(m, s, g, prob) for m, s in [(0, 1), (0.5, 0.3), (-1, 2)]]
    Q = quantile_matrix(dists)
    x = np.linspace(-3, 3, 37)
    out = cdf_rows(Q, prob.closed_levels, x)
    for i, d in enumerate(dists):
        assert np.allclose(out[i], d.cdf(x))


def test_distribution_validates_shape(grid, prob):
    with pytest.raises(ValueError):
        Distribution(grid, prob, np.zeros(5))
    with pytest.raises(ValueError):
        Distribution.from_quantile(grid, prob, np.linspace(1, 0, prob.K))


def test_from_quantile_extrapolates_linearly(grid):
    prob = ProbGrid(3)
    mu = Distribution.from_quantile(grid, prob, [0.3, 0.4, 0.5])
    assert mu.closed_quantile.tolist() == pytest.approx([0.2, 0.3, 0.4, 0.5, 0.6])


def test_truncated_gaussian_moments(prob):
    g = Grid(-10, 10, 101)
    mu = truncated_gaussian(1.0, 2.0, g, prob)
    assert mu.mean() == pytest.approx(1.0, abs=1e-3)
    assert mu.variance() == pytest.approx(4.0, rel=0.03)
    with pytest.raises(ValueError):
        truncated_gaussian(0.0, 0.0, g, prob)


def test_frechet_mean_of_uniforms(grid, prob):
    mu = frechet_mean([uniform(grid, prob, 0.0, 0.4), uniform(grid, prob, 0.6, 1.0)])
    target = uniform(grid, prob, 0.3, 0.7)
    assert np.max(np.abs(mu.closed_quantile - target.closed_quantile)) < 1e-12


def test_frechet_mean_requires_common_grids(grid, prob):
    with pytest.raises(GridMismatchError):
        frechet_mean([uniform(grid, prob), uniform(grid, ProbGrid(11))])
    with pytest.raises(ValueError):
        frechet_mean([])


def test_wasserstein_distance_of_shifts(prob):
    g = Grid(0, 2, 101)
    a = uniform(g, prob, 0.0, 1.0)
    b = uniform(g, prob, 0.5, 1.5)
    assert wasserstein_distance(a, b) == pytest.approx(0.5, abs=1e-12)
    assert wasserstein_distance(a, a) == 0.0


@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_wasserstein_triangle_inequality(los, widths):
    g = Grid(0, 2, 51)
    prob = ProbGrid(41)
    a, b, c = (uniform(g, prob, lo, lo + w) for lo, w in zip(los, widths))
    assert wasserstein_distance(a, c) <= wasserstein_distance(a, b) + wasserstein_distance(b, c) + 1e-12


def test_lqd_inverse_exponential_density(grid, prob):
    v = np.linspace(0, 1, 1001)
    mu = lqd_inverse(v, grid, prob)
    u = prob.closed_levels
    assert np.max(np.abs(mu.closed_quantile - np.expm1(u) / np.expm1(1.0))) < 1e-6


def test_lqd_inverse_constant_is_uniform(prob):
    g = Grid(-1, 3, 41)
    mu = lqd_inverse(np.zeros(11), g, prob)
    assert np.allclose(mu.closed_quantile, -1 + 4 * prob.closed_levels)


def test_lqd_inverse_rejects_bad_input(grid, prob):
    with pytest.raises(ValueError):
        lqd_inverse([1.0], grid, prob)
    with pytest.raises(ValueError):
        lqd_inverse([0.0, np.inf], grid, prob)


def test_rescale_maps_quantiles_affinely(grid, prob):
    mu = uniform(grid, prob, 0.25, 0.75)
    out = rescale(mu, Grid(10, 20, 101))
    assert out.closed_quantile[0] == pytest.approx(12.5)
    assert out.closed_quantile[-1] == pytest.approx(17.5)
    back = rescale(out, grid)
    assert np.allclose(back.closed_quantile, mu.closed_quantile)


def test_from_samples_uses_order_statistics(grid):
    prob = ProbGrid(1)
    mu = from_samples(SampleBatch(3, [0.9, 0.1, 0.5, 2.0]), grid, prob)
    # the value outside the support is dropped
    assert mu.closed_quantile.tolist() == [0.1, 0.5, 0.9]


def test_from_samples_empty_support(grid, prob):
    with pytest.raises(DegenerateInputError):
        from_samples(SampleBatch(1, [5.0, 6.0]), grid, prob)


def test_from_samples_converges(grid, prob, rng):
    mu = from_samples(rng.uniform(0, 1, 20000), grid, prob)
    assert wasserstein_distance(mu, uniform(grid, prob)) < 0.01


def test_sample_batch_rejects_nonfinite():
    with pytest.raises(ValueError):
        SampleBatch(0, [0.1, np.nan])
