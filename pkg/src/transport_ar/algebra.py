"""Transport maps and their group/geodesic operations.

A transport map is a non-decreasing self-map of ``[s1, s2]`` that fixes both
endpoints.  The operations are

* ``oplus(T1, T2) = T2 ∘ T1`` (apply ``T1`` first),
* ``odot(alpha, T)``, moving along the geodesic from the identity towards
  ``T`` (``alpha > 0``) or towards ``T^{-1}`` (``alpha < 0``), with the
  integer part of ``|alpha|`` realised as self-compositions,
* ``circledcirc(beta, T)``, the same rule with a coefficient that varies
  over the grid,
* ``ominus`` and ``pushforward``, linking transports to distributions.

:class:`TransportBatch` evaluates ``alpha ⊙ T_i`` and both of its partial
derivatives for a whole stack of transports at once; the ATM(p) fitter is
built on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import (
    DomainError,
    Grid,
    GridMismatchError,
    MonotoneFn,
    enforce_monotone,
    integrate,
    interp_rows,
    invert_rows,
    invert_values,
    node_slopes,
)

__all__ = [
    "TransportMap",
    "TransportBatch",
    "identity",
    "inverse",
    "oplus",
    "odot",
    "odot_apply",
    "circledcirc",
    "d_dx_odot",
    "d_dalpha_odot",
    "d1",
    "dsup",
    "ominus",
    "pushforward",
]


def _pin(values: np.ndarray, grid: Grid) -> np.ndarray:
    v = enforce_monotone(values, grid.s1, grid.s2)
    v[..., 0] = grid.s1
    v[..., -1] = grid.s2
    return v


@dataclass(frozen=True, eq=False)
class TransportMap(MonotoneFn):
    """Element of the transport group: monotone, ``T(s1) = s1``, ``T(s2) = s2``."""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape == (self.grid.m,):
            v = np.clip(v, self.grid.s1, self.grid.s2)
            v[0] = self.grid.s1
            v[-1] = self.grid.s2
        object.__setattr__(self, "values", v)
        super().__post_init__()

    @classmethod
    def identity(cls, grid: Grid) -> "TransportMap":
        return cls(grid, grid.nodes)

    @classmethod
    def from_callable(cls, grid: Grid, fn, project: bool = True) -> "TransportMap":
        v = np.asarray(fn(grid.nodes), dtype=float)
        if project:
            v = _pin(v, grid)
        return cls(grid, v)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "TransportMap":
        """Build from arbitrary finite node values, projecting onto the group."""
        return cls(grid, _pin(np.asarray(values, dtype=float), grid))

    @cached_property
    def inverse_values(self) -> np.ndarray:
        v = invert_values(self.grid.nodes, self.values, self.grid.nodes)
        v = _pin(v, self.grid)
        v.flags.writeable = False
        return v

    @cached_property
    def batch(self) -> "TransportBatch":
        return TransportBatch(self.grid, self.values[None, :])

    def displacement(self) -> np.ndarray:
        """``T(x) - x`` at the nodes."""
        return self.values - self.grid.nodes

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.displacement())) <= tol)


def identity(grid: Grid) -> TransportMap:
    return TransportMap.identity(grid)


def _check_same_grid(*maps: MonotoneFn) -> Grid:
    grid = maps[0].grid
    for t in maps[1:]:
        if t.grid != grid:
            raise GridMismatchError("transport maps live on different grids")
    return grid


def inverse(T: TransportMap) -> TransportMap:
    """Tabulated left-continuous inverse."""
    return TransportMap(T.grid, T.inverse_values)


def oplus(T1: TransportMap, T2: TransportMap) -> TransportMap:
    """``T1 ⊕ T2 = T2 ∘ T1``."""
    grid = _check_same_grid(T1, T2)
    v = T2.eval(T1.values)
    return TransportMap(grid, _pin(v, grid))


# ---------------------------------------------------------------------------
# batched kernel


class TransportBatch:
    """A stack of transports on one grid, shape ``(n, m)``.

    ``apply``, ``d_dx`` and ``d_dalpha`` take points ``X`` of shape
    ``(n, k)``; row ``i`` of ``X`` is pushed through transport ``i``.
    """

    def __init__(self, grid: Grid, values: np.ndarray, inverse_values: np.ndarray | None = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != grid.m:
            raise ValueError(f"expected values of shape (n, {grid.m}), got {values.shape}")
        self.grid = grid
        self.values = values
        self._h = grid.spacing
        self._s1 = grid.s1
        if inverse_values is None:
            x = np.broadcast_to(grid.nodes, values.shape)
            inverse_values = _pin(invert_rows(grid.nodes, values, x), grid)
        self.inverse_values = np.asarray(inverse_values, dtype=float)
        self.slopes = np.maximum(node_slopes(self.values, self._h), 0.0)
        self.inverse_slopes = np.maximum(node_slopes(self.inverse_values, self._h), 0.0)

    @classmethod
    def from_maps(cls, maps) -> "TransportBatch":
        maps = list(maps)
        grid = _check_same_grid(*maps)
        return cls(grid, np.stack([t.values for t in maps]), np.stack([t.inverse_values for t in maps]))

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, idx) -> "TransportBatch":
        out = TransportBatch.__new__(TransportBatch)
        out.grid = self.grid
        out._h = self._h
        out._s1 = self._s1
        for name in ("values", "inverse_values", "slopes", "inverse_slopes"):
            arr = getattr(self, name)[idx]
            if arr.ndim == 1:
                arr = arr[None, :]
            setattr(out, name, arr)
        return out

    def maps(self) -> list[TransportMap]:
        out = []
        for v, vi in zip(self.values, self.inverse_values):
            t = TransportMap(self.grid, v)
            # reuse the already tabulated inverse
            inv = np.array(vi)
            inv.flags.writeable = False
            t.__dict__["inverse_values"] = inv
            out.append(t)
        return out

    def _f(self, arr, X):
        return interp_rows(arr, X, self._s1, self._h)

    def _branch(self, alpha: float):
        if alpha > 0:
            return self.values, self.slopes
        return self.inverse_values, self.inverse_slopes

    def powers(self, alpha: float, X: np.ndarray) -> np.ndarray:
        """``b``-fold self-composition of ``T`` (or ``T^{-1}``), ``b = floor|alpha|``."""
        F, _ = self._branch(alpha)
        H = np.asarray(X, dtype=float)
        for _ in range(int(math.floor(abs(alpha)))):
            H = self._f(F, H)
        return H

    def apply(self, alpha: float, X: np.ndarray) -> np.ndarray:
        """``(alpha ⊙ T_i)(X[i])``."""
        X = np.asarray(X, dtype=float)
        if alpha == 0:
            return X.copy()
        F, _ = self._branch(alpha)
        A = abs(alpha)
        b = int(math.floor(A))
        a = A - b
        H = X
        for _ in range(b):
            H = self._f(F, H)
        if a > 0:
            H = H + a * (self._f(F, H) - H)
        return H

    def d_dx(self, alpha: float, X: np.ndarray) -> np.ndarray:
        """Partial derivative of ``(alpha ⊙ T_i)(x)`` in ``x`` via the chain rule."""
        X = np.asarray(X, dtype=float)
        if alpha == 0:
            return np.ones_like(X)
        F, G = self._branch(alpha)
        A = abs(alpha)
        b = int(math.floor(A))
        a = A - b
        prod = np.ones_like(X)
        H = X
        for _ in range(b):
            prod = prod * self._f(G, H)
            H = self._f(F, H)
        # same expression for both signs once F is T or T^{-1}
        return prod * (1.0 + a * (self._f(G, H) - 1.0))

    def d_dalpha(self, alpha: float, X: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Partial derivative (or subgradient) of ``(alpha ⊙ T_i)(x)`` in ``alpha``.

        At ``alpha = 0`` one of ``T(x) - x`` and ``x - T^{-1}(x)`` is drawn
        with equal probability from ``rng``; without ``rng`` their midpoint
        (also a valid subgradient) is returned.  At other integers the
        derivative from the side of larger ``|alpha|`` is used.
        """
        X = np.asarray(X, dtype=float)
        if alpha == 0:
            plus = self._f(self.values, X) - X
            minus = X - self._f(self.inverse_values, X)
            if rng is None:
                return 0.5 * (plus + minus)
            return plus if rng.random() < 0.5 else minus
        H = self.powers(alpha, X)
        if alpha > 0:
            return self._f(self.values, H) - H
        return H - self._f(self.inverse_values, H)

    def _locate(self, X):
        n, m = self.values.shape
        t = (X - self._s1) * (1.0 / self._h)
        np.maximum(t, 0.0, out=t)
        np.minimum(t, m - 1.0, out=t)
        j = t.astype(np.intp)
        np.minimum(j, m - 2, out=j)
        w = t - j
        j += (np.arange(n) * m)[:, None]
        return j, w

    @staticmethod
    def _gather(arr, loc):
        j, w = loc
        flat = arr.ravel()
        v0 = flat.take(j)
        return v0 + w * (flat.take(j + 1) - v0)

    def jet(self, alpha: float, X: np.ndarray, rng: np.random.Generator | None = None):
        """``(d_dx, d_dalpha)`` at ``X`` in one pass, sharing the interpolation work."""
        X = np.asarray(X, dtype=float)
        if alpha == 0:
            return np.ones_like(X), self.d_dalpha(0.0, X, rng)
        F, G = self._branch(alpha)
        A = abs(alpha)
        b = int(math.floor(A))
        a = A - b
        prod = None
        H = X
        for _ in range(b):
            loc = self._locate(H)
            g = self._gather(G, loc)
            prod = g if prod is None else prod * g
            H = self._gather(F, loc)
        loc = self._locate(H)
        FH = self._gather(F, loc)
        dx = 1.0 + a * (self._gather(G, loc) - 1.0)
        if prod is not None:
            dx = prod * dx
        da = FH - H if alpha > 0 else H - FH
        return dx, da

    def circledcirc(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise-coefficient rule at the nodes; returns (raw, projected)."""
        x = self.grid.nodes
        beta = np.asarray(beta, dtype=float)
        up = x + beta * (self.values - x)
        down = x + beta * (x - self.inverse_values)
        raw = np.where(beta > 0, up, np.where(beta < 0, down, x))
        return raw, _pin(raw, self.grid)


# ---------------------------------------------------------------------------
# single-map API


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x, x.reshape(1, -1)


def _unwrap(out, x):
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def odot_apply(alpha: float, T: TransportMap, x) -> np.ndarray | float:
    """Evaluate ``(alpha ⊙ T)(x)`` without re-tabulating."""
    x, X = _as_points(x)
    if np.any(~T.grid.contains(x)):
        raise DomainError("x outside the support")
    return _unwrap(T.batch.apply(float(alpha), X), x)


def odot(alpha: float, T: TransportMap) -> TransportMap:
    """``alpha ⊙ T`` tabulated on ``T.grid``; any real ``alpha``."""
    v = T.batch.apply(float(alpha), T.grid.nodes[None, :])[0]
    return TransportMap(T.grid, _pin(v, T.grid))


def circledcirc(beta, T: TransportMap, return_projected: bool = False):
    """``beta ⊛ T`` for a coefficient function tabulated on the grid.

    ``beta`` may be a scalar or an array of node values in ``[-1, 1]``.  The
    pointwise result can fail to be monotone for arbitrary ``beta``; it is
    projected by running maximum.  With ``return_projected=True`` a flag
    telling whether the projection changed anything is returned as well.
    """
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (T.grid.m,))
    if np.any(np.abs(beta) > 1.0):
        raise ValueError("beta must take values in [-1, 1]")
    raw, proj = T.batch.circledcirc(beta)
    raw, proj = raw[0], proj[0]
    out = TransportMap(T.grid, proj)
    if return_projected:
        return out, bool(np.any(np.abs(proj - raw) > 1e-12))
    return out


def d_dx_odot(alpha: float, T: TransportMap, x) -> np.ndarray | float:
    x, X = _as_points(x)
    return _unwrap(T.batch.d_dx(float(alpha), X), x)


def d_dalpha_odot(alpha: float, T: TransportMap, x, rng: np.random.Generator | None = None):
    x, X = _as_points(x)
    return _unwrap(T.batch.d_dalpha(float(alpha), X, rng), x)


def d1(S: TransportMap, T: TransportMap) -> float:
    """L1 distance between transports on the shared grid."""
    grid = _check_same_grid(S, T)
    return float(integrate(np.abs(S.values - T.values), grid=grid))


def dsup(S: MonotoneFn, T: MonotoneFn) -> float:
    _check_same_grid(S, T)
    return float(np.max(np.abs(S.values - T.values)))


# ---------------------------------------------------------------------------
# transports <-> distributions


def ominus(mu2, mu1) -> TransportMap:
    """Optimal transport pushing ``mu1`` to ``mu2``: ``Q2 ∘ F1`` on the grid."""
    if mu1.support != mu2.support or mu1.prob != mu2.prob:
        raise GridMismatchError("distributions must share support and probability grid")
    grid = mu1.support
    v = mu2.quantile_at(mu1.cdf(grid.nodes))
    return TransportMap(grid, _pin(v, grid))


def pushforward(T: TransportMap, mu):
    """Distribution of ``T(X)`` for ``X ~ mu``: quantile ``T ∘ Q``."""
    if T.grid != mu.support:
        raise GridMismatchError("transport and distribution live on different supports")
    return mu.with_quantile_closed(T.eval(mu.closed_quantile))
