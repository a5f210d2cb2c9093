"""Monotone functions tabulated on a shared uniform grid.

Every function handled by the package lives on one :class:`Grid`: a set of
``m`` equally spaced nodes on ``[s1, s2]``.  Between nodes functions are
piecewise linear.  The helpers here are deliberately array-oriented so that
the model fitters can push whole batches of points (one row per transport)
through a batch of tabulated functions without Python loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "Grid",
    "ProbGrid",
    "MonotoneFn",
    "DomainError",
    "GridMismatchError",
    "interp_uniform",
    "interp_rows",
    "invert_values",
    "invert_rows",
    "node_slopes",
    "enforce_monotone",
    "isotonic_projection",
    "integrate",
    "natural_cubic_spline",
]


class DomainError(ValueError):
    """Argument outside the interval where a function is defined."""


class GridMismatchError(ValueError):
    """Two functions tabulated on different grids were combined."""


@dataclass(frozen=True)
class Grid:
    """``m`` equally spaced nodes on ``[s1, s2]``."""

    s1: float = 0.0
    s2: float = 1.0
    m: int = 101

    def __post_init__(self):
        if not self.s2 > self.s1:
            raise ValueError(f"need s2 > s1, got [{self.s1}, {self.s2}]")
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"grid needs at least 2 nodes, got m={self.m}")
        object.__setattr__(self, "s1", float(self.s1))
        object.__setattr__(self, "s2", float(self.s2))
        object.__setattr__(self, "m", int(self.m))

    @property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.s1, self.s2, self.m)
        x.flags.writeable = False
        return x

    @property
    def spacing(self) -> float:
        return (self.s2 - self.s1) / (self.m - 1)

    @property
    def width(self) -> float:
        return self.s2 - self.s1

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.s1) & (x <= self.s2)


@dataclass(frozen=True)
class ProbGrid:
    """Probability levels ``u_1 < ... < u_K`` strictly inside ``(0, 1)``.

    The default levels are ``k / (K + 1)`` for ``k = 1..K``.
    """

    K: int = 201
    levels: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.levels is None:
            if int(self.K) != self.K or self.K < 1:
                raise ValueError(f"K must be a positive integer, got {self.K}")
            lv = np.arange(1, self.K + 1) / (self.K + 1.0)
        else:
            lv = np.asarray(self.levels, dtype=float).copy()
            if lv.ndim != 1 or lv.size < 1:
                raise ValueError("levels must be a non-empty 1-d array")
            if np.any(np.diff(lv) <= 0) or lv[0] <= 0 or lv[-1] >= 1:
                raise ValueError("levels must be strictly increasing inside (0, 1)")
            object.__setattr__(self, "K", int(lv.size))
        lv.flags.writeable = False
        object.__setattr__(self, "levels", lv)

    def __eq__(self, other):
        if not isinstance(other, ProbGrid):
            return NotImplemented
        return self.K == other.K and np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash((self.K, self.levels.tobytes()))

    @property
    def closed_levels(self) -> np.ndarray:
        """Levels with 0 and 1 appended, used for integration over [0, 1]."""
        return np.concatenate(([0.0], self.levels, [1.0]))


# ---------------------------------------------------------------------------
# array kernels


def interp_uniform(values: np.ndarray, x, s1: float, h: float) -> np.ndarray:
    """Piecewise-linear interpolation of ``values`` tabulated on a uniform grid.

    ``x`` may have any shape; points outside the grid are clamped to the
    first/last segment's endpoints.
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    m = values.shape[-1]
    t = (x - s1) / h
    t = np.clip(t, 0.0, m - 1.0)
    j = np.minimum(t.astype(np.intp), m - 2)
    w = t - j
    return values[j] * (1.0 - w) + values[j + 1] * w


def interp_rows(values: np.ndarray, x: np.ndarray, s1: float, h: float) -> np.ndarray:
    """Row-wise version of :func:`interp_uniform`.

    ``values`` has shape ``(n, m)``: row ``i`` is a function tabulated on the
    grid.  ``x`` has shape ``(n, k)`` and row ``i`` of the result is function
    ``i`` evaluated at ``x[i]``.
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = values.shape
    if x.shape[0] != n:
        x = np.broadcast_to(x, (n,) + x.shape[1:])
    t = (x - s1) * (1.0 / h)
    np.maximum(t, 0.0, out=t)
    np.minimum(t, m - 1.0, out=t)
    j = t.astype(np.intp)
    np.minimum(j, m - 2, out=j)
    w = t - j
    # flat gather is much cheaper than fancy 2-d indexing
    j += (np.arange(n) * m)[:, None]
    flat = values.ravel()
    v0 = flat.take(j)
    return v0 + w * (flat.take(j + 1) - v0)


def invert_values(nodes: np.ndarray, values: np.ndarray, y) -> np.ndarray:
    """``inf{x : f(x) >= y}`` for the piecewise-linear ``f`` through (nodes, values).

    ``values`` must be non-decreasing.  On flat stretches the left edge is
    returned; ``y`` below the range maps to ``nodes[0]`` and above the range to
    ``nodes[-1]``.
    """
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    m = values.size
    j = np.searchsorted(values, y, side="left")
    j = np.clip(j, 1, m - 1)
    v0 = values[j - 1]
    v1 = values[j]
    dv = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dv > 0, (y - v0) / dv, 1.0)
    w = np.clip(w, 0.0, 1.0)
    out = nodes[j - 1] + w * (nodes[j] - nodes[j - 1])
    out = np.where(y <= values[0], nodes[0], out)
    out = np.where(y > values[-1], nodes[-1], out)
    return out


def invert_rows(nodes: np.ndarray, values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise :func:`invert_values` for ``values`` of shape ``(n, m)``."""
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = values.shape
    lo = min(values.min(), y.min())
    span = max(values.max(), y.max()) - lo + 1.0
    # offset each row into its own band so one searchsorted handles all rows
    offs = (np.arange(n) * span)[:, None]
    flat = (values - lo + offs).ravel()
    pos = np.searchsorted(flat, (y - lo + offs).ravel(), side="left").reshape(y.shape)
    j = np.clip(pos - np.arange(n)[:, None] * m, 1, m - 1)
    rows = np.arange(n)[:, None]
    v0 = values[rows, j - 1]
    v1 = values[rows, j]
    dv = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dv > 0, (y - v0) / dv, 1.0)
    w = np.clip(w, 0.0, 1.0)
    out = nodes[j - 1] + w * (nodes[j] - nodes[j - 1])
    out = np.where(y <= values[:, :1], nodes[0], out)
    out = np.where(y > values[:, -1:], nodes[-1], out)
    return out


def node_slopes(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences at interior nodes, one-sided at the two ends.

    Interpolating these node slopes linearly reproduces exactly the
    one-grid-step central difference of the piecewise-linear interpolant.
    """
    return np.gradient(np.asarray(values, dtype=float), h, axis=-1)


def enforce_monotone(values, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Running maximum along the last axis, then clamp into ``[lo, hi]``."""
    out = np.maximum.accumulate(np.asarray(values, dtype=float), axis=-1)
    if lo is not None or hi is not None:
        out = np.clip(out, lo, hi)
    return out


def isotonic_projection(values, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Least-squares non-decreasing fit (pool adjacent violators), then clamp."""
    from sklearn.isotonic import isotonic_regression

    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        out = isotonic_regression(v, increasing=True)
    else:
        out = np.stack([isotonic_regression(r, increasing=True) for r in v.reshape(-1, v.shape[-1])])
        out = out.reshape(v.shape)
    if lo is not None or hi is not None:
        out = np.clip(out, lo, hi)
    return out


def integrate(values, h: float = None, grid: Grid | None = None) -> float:
    """Trapezoid rule on a uniform grid (last axis)."""
    if grid is not None:
        h = grid.spacing
    if h is None:
        raise TypeError("integrate needs the grid spacing h or a Grid")
    v = np.asarray(values, dtype=float)
    if v.shape[-1] < 2:
        raise ValueError("need at least two nodes to integrate")
    return h * (v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1]))


# ---------------------------------------------------------------------------
# MonotoneFn


@dataclass(frozen=True, eq=False)
class MonotoneFn:
    """Non-decreasing function tabulated on ``grid.nodes``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.m,):
            raise ValueError(f"expected {self.grid.m} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if np.any(np.diff(v) < -1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("values must be non-decreasing")
        v = np.maximum.accumulate(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, grid: Grid) -> "MonotoneFn":
        return cls(grid, grid.nodes)

    @classmethod
    def from_callable(cls, grid: Grid, fn, project: bool = True) -> "MonotoneFn":
        v = np.asarray(fn(grid.nodes), dtype=float)
        if project:
            v = enforce_monotone(v)
        return cls(grid, v)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~self.grid.contains(x)):
            raise DomainError(f"x outside [{self.grid.s1}, {self.grid.s2}]")
        out = interp_uniform(self.values, x, self.grid.s1, self.grid.spacing)
        return float(out) if out.ndim == 0 else out

    def invert(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.values[0], self.values[-1]
        if np.any((y < lo) | (y > hi)):
            raise DomainError(f"y outside the range [{lo}, {hi}]")
        out = invert_values(self.grid.nodes, self.values, y)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~self.grid.contains(x)):
            raise DomainError(f"x outside [{self.grid.s1}, {self.grid.s2}]")
        slopes = np.maximum(node_slopes(self.values, self.grid.spacing), 0.0)
        out = interp_uniform(slopes, x, self.grid.s1, self.grid.spacing)
        return float(out) if out.ndim == 0 else out

    def compose(self, inner: "MonotoneFn") -> "MonotoneFn":
        """``self ∘ inner`` re-tabulated on the shared grid."""
        if inner.grid != self.grid:
            raise GridMismatchError("cannot compose functions on different grids")
        if inner.values[0] < self.grid.s1 or inner.values[-1] > self.grid.s2:
            raise DomainError("range of the inner function leaves the domain")
        v = interp_uniform(self.values, inner.values, self.grid.s1, self.grid.spacing)
        return MonotoneFn(self.grid, enforce_monotone(v))

    def sup_distance(self, other: "MonotoneFn") -> float:
        if other.grid != self.grid:
            raise GridMismatchError("functions live on different grids")
        return float(np.max(np.abs(self.values - other.values)))


def natural_cubic_spline(points, grid: Grid | None = None):
    """Natural cubic spline through ``points``.

    Returns the scipy spline when ``grid`` is None, otherwise the spline
    tabulated on ``grid``, projected to be non-decreasing and clamped into
    the grid interval.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if len(pts) < 3:
        raise ValueError("a natural cubic spline needs at least 3 points")
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ValueError("x-coordinates must be strictly increasing")
    spline = CubicSpline(pts[:, 0], pts[:, 1], bc_type="natural")
    if grid is None:
        return spline
    v = enforce_monotone(spline(grid.nodes), grid.s1, grid.s2)
    return MonotoneFn(grid, v)
