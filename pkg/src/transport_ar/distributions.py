"""One-dimensional distributions on a bounded interval, stored as quantiles.

A :class:`Distribution` keeps its quantile function on the closed level set
``0, u_1, ..., u_K, 1`` of a :class:`~transport_ar.grid.ProbGrid`.  The two
outer values are the essential infimum and supremum of the distribution;
when a caller only supplies the interior levels they are obtained by linear
extrapolation clamped into the support.  Between levels the quantile is
piecewise linear, and the cdf is its right-continuous inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .grid import Grid, GridMismatchError, ProbGrid

__all__ = [
    "Distribution",
    "SampleBatch",
    "DegenerateInputError",
    "from_samples",
    "frechet_mean",
    "wasserstein_distance",
    "lqd_inverse",
    "rescale",
    "uniform",
    "truncated_gaussian",
    "quantile_matrix",
    "cdf_rows",
]


class DegenerateInputError(ValueError):
    """Input data carry no usable information (empty, all outside support...)."""


def _trapz(y, x):
    y = np.asarray(y, dtype=float)
    dx = np.diff(x)
    return float(np.sum(0.5 * dx * (y[..., 1:] + y[..., :-1]), axis=-1))


@dataclass(frozen=True, eq=False)
class Distribution:
    support: Grid
    prob: ProbGrid
    closed_quantile: np.ndarray

    def __post_init__(self):
        q = np.array(self.closed_quantile, dtype=float)
        if q.shape != (self.prob.K + 2,):
            raise ValueError(f"expected {self.prob.K + 2} closed quantile values, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("quantile values must be finite")
        q = np.clip(np.maximum.accumulate(q), self.support.s1, self.support.s2)
        q.flags.writeable = False
        object.__setattr__(self, "closed_quantile", q)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_quantile(cls, support: Grid, prob: ProbGrid, quantile) -> "Distribution":
        """From quantile values at the interior levels only."""
        q = np.asarray(quantile, dtype=float)
        if q.shape != (prob.K,):
            raise ValueError(f"expected {prob.K} quantile values, got {q.shape}")
        if np.any(np.diff(q) < 0):
            raise ValueError("quantile values must be non-decreasing")
        u = prob.levels
        if prob.K == 1:
            lo = hi = q[0]
        else:
            lo = q[0] - u[0] * (q[1] - q[0]) / (u[1] - u[0])
            hi = q[-1] + (1.0 - u[-1]) * (q[-1] - q[-2]) / (u[-1] - u[-2])
        closed = np.concatenate(([lo], q, [hi]))
        return cls(support, prob, closed)

    @classmethod
    def from_quantile_fn(cls, support: Grid, prob: ProbGrid, fn) -> "Distribution":
        """From a callable quantile function evaluated on the closed levels."""
        return cls(support, prob, np.asarray(fn(prob.closed_levels), dtype=float))

    def with_quantile_closed(self, closed) -> "Distribution":
        return Distribution(self.support, self.prob, closed)

    # -- views ------------------------------------------------------------

    @property
    def quantile(self) -> np.ndarray:
        """Quantile values at the interior levels ``u_1..u_K``."""
        return self.closed_quantile[1:-1]

    def quantile_at(self, u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, self.prob.closed_levels, self.closed_quantile)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """``F(x) = sup{u : Q(u) <= x}``, in ``[0, 1]``; ``cdf(s2) = 1``."""
        x = np.asarray(x, dtype=float)
        q = self.closed_quantile
        U = self.prob.closed_levels
        j = np.clip(np.searchsorted(q, x, side="right"), 1, q.size - 1)
        q0, q1 = q[j - 1], q[j]
        dq = q1 - q0
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(dq > 0, (x - q0) / dq, 1.0)
        out = U[j - 1] + np.clip(w, 0.0, 1.0) * (U[j] - U[j - 1])
        out = np.where(x < q[0], 0.0, out)
        out = np.where(x >= q[-1], 1.0, out)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return _trapz(self.closed_quantile, self.prob.closed_levels)

    def variance(self) -> float:
        m = self.mean()
        return _trapz((self.closed_quantile - m) ** 2, self.prob.closed_levels)

    def median(self) -> float:
        return self.quantile_at(0.5)


@dataclass(frozen=True)
class SampleBatch:
    time_index: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise DegenerateInputError(f"empty sample batch at time {self.time_index}")
        if not np.all(np.isfinite(v)):
            raise DegenerateInputError(f"non-finite observations at time {self.time_index}")
        object.__setattr__(self, "values", v)


def _check_compatible(dists: Sequence[Distribution]):
    d0 = dists[0]
    for d in dists[1:]:
        if d.support != d0.support or d.prob != d0.prob:
            raise GridMismatchError("distributions must share support and probability grid")


def uniform(support: Grid, prob: ProbGrid, lo: float | None = None, hi: float | None = None) -> Distribution:
    lo = support.s1 if lo is None else lo
    hi = support.s2 if hi is None else hi
    return Distribution.from_quantile_fn(support, prob, lambda u: lo + u * (hi - lo))


def truncated_gaussian(mean: float, sd: float, support: Grid, prob: ProbGrid) -> Distribution:
    """Gaussian ``N(mean, sd^2)`` conditioned on the support interval.

    The quantile is evaluated at the interior levels and extrapolated to 0
    and 1; using the exact bounds there would put long linear tails on the
    tabulated quantile and inflate its variance.
    """
    if not sd > 0:
        raise ValueError("sd must be positive")
    a = (support.s1 - mean) / sd
    b = (support.s2 - mean) / sd
    q = stats.truncnorm.ppf(prob.levels, a, b, loc=mean, scale=sd)
    return Distribution.from_quantile(support, prob, q)


def from_samples(batch: SampleBatch | Sequence[float], support: Grid, prob: ProbGrid) -> Distribution:
    """Empirical quantiles (linear interpolation between order statistics).

    Observations outside the support are dropped; the closed endpoints are
    the sample minimum and maximum.
    """
    if not isinstance(batch, SampleBatch):
        batch = SampleBatch(0, batch)
    v = batch.values
    inside = v[(v >= support.s1) & (v <= support.s2)]
    if inside.size == 0:
        raise DegenerateInputError(
            f"no observations inside [{support.s1}, {support.s2}] at time {batch.time_index}"
        )
    q = np.quantile(inside, prob.closed_levels, method="linear")
    return Distribution(support, prob, q)


def quantile_matrix(dists: Sequence[Distribution]) -> np.ndarray:
    """Closed quantiles stacked into shape ``(n, K + 2)``."""
    dists = list(dists)
    _check_compatible(dists)
    return np.stack([d.closed_quantile for d in dists])


def cdf_rows(Q: np.ndarray, levels: np.ndarray, x) -> np.ndarray:
    """Row-wise :meth:`Distribution.cdf` for closed quantile rows ``Q``."""
    Q = np.asarray(Q, dtype=float)
    x = np.asarray(x, dtype=float)
    n, k = Q.shape
    X = np.broadcast_to(x, (n, x.size))
    lo = min(Q.min(), x.min())
    span = max(Q.max(), x.max()) - lo + 1.0
    offs = (np.arange(n) * span)[:, None]
    pos = np.searchsorted((Q - lo + offs).ravel(), (X - lo + offs).ravel(), side="right").reshape(X.shape)
    j = np.clip(pos - (np.arange(n) * k)[:, None], 1, k - 1)
    rows = np.arange(n)[:, None]
    q0, q1 = Q[rows, j - 1], Q[rows, j]
    dq = q1 - q0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dq > 0, (X - q0) / dq, 1.0)
    out = levels[j - 1] + np.clip(w, 0.0, 1.0) * (levels[j] - levels[j - 1])
    out = np.where(X < Q[:, :1], 0.0, out)
    return np.where(X >= Q[:, -1:], 1.0, out)


def frechet_mean(dists: Sequence[Distribution]) -> Distribution:
    """Wasserstein barycenter: the pointwise average of quantile functions."""
    dists = list(dists)
    if not dists:
        raise ValueError("need at least one distribution")
    _check_compatible(dists)
    q = np.mean([d.closed_quantile for d in dists], axis=0)
    return dists[0].with_quantile_closed(q)


def wasserstein_distance(mu1: Distribution, mu2: Distribution) -> float:
    _check_compatible([mu1, mu2])
    diff = mu2.closed_quantile - mu1.closed_quantile
    return float(np.sqrt(max(_trapz(diff**2, mu1.prob.closed_levels), 0.0)))


def lqd_inverse(f, support: Grid, prob: ProbGrid) -> Distribution:
    """Distribution whose log quantile density is ``f``.

    ``f`` holds values on a uniform tabulation of ``[0, 1]``.  The quantile is
    the normalised running integral of ``exp(f)``, mapped onto the support.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("f must be a 1-d tabulation with at least two values")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    v = np.linspace(0.0, 1.0, f.size)
    e = np.exp(f - f.max())
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(v))))
    cum /= cum[-1]
    q = support.s1 + support.width * np.interp(prob.closed_levels, v, cum)
    return Distribution(support, prob, q)


def rescale(dist: Distribution, new_support: Grid) -> Distribution:
    """Affine map of the quantile function from ``dist.support`` onto ``new_support``."""
    old = dist.support
    q = new_support.s1 + (dist.closed_quantile - old.s1) * (new_support.width / old.width)
    return Distribution(new_support, dist.prob, q)
