"""Synthetic generators and the Monte Carlo harness.

* random transports from an ATM recursion driven by spline distortion noise,
* distributions from ``sin(zeta_i x)`` log quantile densities,
* a shrinking-Gaussian series that is not stationary,
* coupling and estimation-rate experiments.

Every generator draws from an explicit ``numpy.random.Generator``.  The
Monte Carlo harness derives one independent stream per replication from a
single seed, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import TransportBatch, TransportMap, _pin, d1
from .distributions import Distribution, lqd_inverse, rescale, truncated_gaussian, wasserstein_distance
from .grid import Grid, ProbGrid, interp_uniform, invert_rows, invert_values, natural_cubic_spline
from .models import FitConfig, ModelError, ModelSpec, fit_atm1

log = logging.getLogger(__name__)

__all__ = [
    "TABLE_POINTS",
    "RATE_POINTS",
    "NOISE_VARIANTS",
    "SplineNoiseModel",
    "sample_noise",
    "SimConfig",
    "simulate_atm",
    "atm_recursion",
    "transports_as_distributions",
    "SinSimConfig",
    "simulate_sin_series",
    "gaussian_shrinking_series",
    "ExperimentSpec",
    "MonteCarloResult",
    "run_monte_carlo",
    "coupling_gaps",
    "log_linear_slope",
    "rate_experiment",
]

TABLE_POINTS = ((0.0, 0.0), (0.33, 0.7), (0.66, 0.8), (1.0, 1.0))
RATE_POINTS = ((0.0, 0.0), (0.3, 0.5), (0.6, 0.8), (1.0, 1.0))
NOISE_VARIANTS = ("printed", "corrected", "symmetrized")


# ---------------------------------------------------------------------------
# spline noise


class SplineNoiseModel:
    """Random distortions of the identity built from a monotone spline ``g``.

    For ``xi ~ U(-1, 1)``, ``h = ((1 - xi) g + (1 + xi) id) / 2`` and

    * ``printed``:  ``eps = ((1 + xi) g(h^-1) + (1 + xi) h^-1) / 2``
    * ``corrected``: ``eps = ((1 + xi) g(h^-1) + (1 - xi) h^-1) / 2``, which
      equals ``g`` at ``xi = 1``, ``g^-1`` at ``xi = -1`` and satisfies
      ``eps_{-xi} = eps_xi^{-1}``
    * ``symmetrized``: the printed map for ``xi >= 0`` and the inverse of the
      printed map at ``-xi`` for ``xi < 0``.

    All outputs are projected onto monotone maps with pinned endpoints.
    """

    def __init__(self, grid: Grid | None = None, control_points=TABLE_POINTS, variant: str = "printed"):
        if variant not in NOISE_VARIANTS:
            raise ValueError(f"unknown noise variant {variant!r}; expected one of {NOISE_VARIANTS}")
        self.grid = grid or Grid()
        if (self.grid.s1, self.grid.s2) != (0.0, 1.0):
            raise ValueError("spline noise is defined on [0, 1]")
        self.control_points = [tuple(map(float, p)) for p in control_points]
        self.variant = variant
        spline = natural_cubic_spline(self.control_points)
        self.g = TransportMap.from_callable(self.grid, spline)
        if np.any(np.diff(self.g.values) <= 0):
            raise ValueError("spline through the control points is not strictly increasing on the grid")
        self.g_inv = TransportMap(self.grid, self.g.inverse_values)

    def __repr__(self):
        return f"SplineNoiseModel(m={self.grid.m}, variant={self.variant!r}, points={self.control_points})"

    def _raw(self, xi: np.ndarray, second: np.ndarray) -> np.ndarray:
        x = self.grid.nodes
        xi = np.asarray(xi, dtype=float)[:, None]
        h = 0.5 * ((1.0 - xi) * self.g.values + (1.0 + xi) * x)
        hinv = _pin(invert_rows(x, h, np.broadcast_to(x, h.shape)), self.grid)
        gh = interp_uniform(self.g.values, hinv, self.grid.s1, self.grid.spacing)
        return _pin(0.5 * ((1.0 + xi) * gh + second[:, None] * hinv), self.grid)

    def values_for(self, xi) -> np.ndarray:
        """Tabulated noise maps, one row per ``xi``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if np.any(np.abs(xi) > 1):
            raise ValueError("xi must lie in [-1, 1]")
        if self.variant == "printed":
            return self._raw(xi, 1.0 + xi)
        if self.variant == "corrected":
            return self._raw(xi, 1.0 - xi)
        a = np.abs(xi)
        out = self._raw(a, 1.0 + a)
        x = self.grid.nodes
        neg = xi < 0
        if np.any(neg):
            rows = out[neg]
            out[neg] = _pin(invert_rows(x, rows, np.broadcast_to(x, rows.shape)), self.grid)
        return out

    def noise_for(self, xi: float) -> TransportMap:
        return TransportMap(self.grid, self.values_for([xi])[0])

    def sample_values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.values_for(rng.uniform(-1.0, 1.0, size=size))

    def sample(self, rng: np.random.Generator) -> TransportMap:
        return TransportMap(self.grid, self.sample_values(rng, 1)[0])

    def mean_diagnostic(self, n_draws: int = 100_000, rng=None, chunk: int = 10_000) -> dict:
        """Monte Carlo estimate of the pointwise mean noise map and its gap to the identity."""
        rng = rng if rng is not None else np.random.default_rng(0)
        total = np.zeros(self.grid.m)
        done = 0
        while done < n_draws:
            k = min(chunk, n_draws - done)
            total += self.sample_values(rng, k).sum(axis=0)
            done += k
        mean = total / n_draws
        gap = mean - self.grid.nodes
        return {
            "mean": mean,
            "sup_gap": float(np.max(np.abs(gap))),
            "l2_gap": float(np.sqrt(np.sum(gap**2) * self.grid.spacing)),
            "draws": n_draws,
        }


def sample_noise(model: SplineNoiseModel, rng: np.random.Generator) -> TransportMap:
    return model.sample(rng)


# ---------------------------------------------------------------------------
# ATM recursion


@dataclass(frozen=True)
class SimConfig:
    alphas: tuple = (0.5,)
    n: int = 101
    burn_in: int = 100
    seed: int = 0
    noise: str = "printed"
    control_points: tuple = TABLE_POINTS
    grid_size: int = 101

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not 1 <= len(self.alphas) <= 4:
            raise ValueError("between one and four coefficients are supported")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.noise not in NOISE_VARIANTS:
            raise ValueError(f"unknown noise variant {self.noise!r}")

    def noise_model(self) -> SplineNoiseModel:
        return SplineNoiseModel(Grid(0.0, 1.0, self.grid_size), self.control_points, self.noise)


def _odot_row(alpha, T, Tinv, X, s1, h):
    """``(alpha ⊙ T)(X)`` for a single tabulated map."""
    if alpha == 0:
        return X
    F = T if alpha > 0 else Tinv
    A = abs(alpha)
    b = int(math.floor(A))
    a = A - b
    for _ in range(b):
        X = interp_uniform(F, X, s1, h)
    if a > 0:
        X = X + a * (interp_uniform(F, X, s1, h) - X)
    return X


def atm_recursion(alphas: Sequence[float], initial: np.ndarray, noise: np.ndarray, grid: Grid) -> np.ndarray:
    """Iterate ``T_i = eps_i ∘ (a_1 ⊙ T_{i-1}) ∘ ... ∘ (a_p ⊙ T_{i-p})`` on node values.

    ``initial`` holds ``p`` starting maps, oldest first; ``noise`` one map per
    step.  Returns the generated maps, shape ``(len(noise), m)``.
    """
    alphas = [float(a) for a in alphas]
    p = len(alphas)
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (p, grid.m):
        raise ValueError(f"initial must have shape ({p}, {grid.m})")
    x = grid.nodes
    s1, h = grid.s1, grid.spacing
    hist = list(initial)
    inv = [None] * p
    need_inv = any(a < 0 for a in alphas)
    if need_inv:
        inv = [_pin(invert_values(x, v, x), grid) for v in hist]
    out = np.empty((noise.shape[0], grid.m))
    for i in range(noise.shape[0]):
        X = x
        # oldest lag is applied first
        for k in range(p, 0, -1):
            X = _odot_row(alphas[k - 1], hist[-k], inv[-k], X, s1, h)
        X = interp_uniform(noise[i], X, s1, h)
        T = _pin(X, grid)
        out[i] = T
        hist.append(T)
        hist.pop(0)
        if need_inv:
            inv.append(_pin(invert_values(x, T, x), grid))
            inv.pop(0)
    return out


def simulate_atm(config: SimConfig, rng: np.random.Generator | None = None,
                 noise_model: SplineNoiseModel | None = None) -> list[TransportMap]:
    """Generate ``config.n`` transports after ``config.burn_in`` warm-up steps from identity starts."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    model = noise_model or config.noise_model()
    grid = model.grid
    p = len(config.alphas)
    noise = model.sample_values(rng, config.burn_in + config.n)
    init = np.broadcast_to(grid.nodes, (p, grid.m))
    vals = atm_recursion(config.alphas, init, noise, grid)[config.burn_in:]
    return [TransportMap(grid, v) for v in vals]


def transports_as_distributions(transports: Sequence[TransportMap], prob: ProbGrid | None = None) -> list[Distribution]:
    """Read each transport as a quantile function on ``[0, 1]``."""
    prob = prob or ProbGrid()
    out = []
    for T in transports:
        g = T.grid
        u = g.s1 + prob.closed_levels * g.width
        out.append(Distribution(g, prob, T.eval(u)))
    return out


# ---------------------------------------------------------------------------
# sin / inverse-LQD series


@dataclass(frozen=True)
class SinSimConfig:
    alphas: tuple = (0.5, 0.0, 0.0, 0.0)
    n: int = 101
    seed: int = 0
    burn_in: int = 100
    # use lag 2 for the second coefficient instead of repeating lag 1
    lag_fix: bool = False
    tabulation: int = 101

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        if len(a) > 4:
            raise ValueError("at most four coefficients")
        object.__setattr__(self, "alphas", a + (0.0,) * (4 - len(a)))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.tabulation < 2:
            raise ValueError("tabulation needs at least two points")


def sin_zeta(config: SinSimConfig, rng: np.random.Generator) -> np.ndarray:
    a1, a2, a3, a4 = config.alphas
    lag2 = 2 if config.lag_fix else 1
    total = config.burn_in + config.n
    z = np.zeros(total + 4)
    eps = rng.uniform(-4 * np.pi, 4 * np.pi, size=total)
    for t in range(total):
        i = t + 4
        z[i] = a1 * z[i - 1] + a2 * z[i - lag2] + a3 * z[i - 3] + a4 * z[i - 4] + eps[t]
    return z[4 + config.burn_in:]


def simulate_sin_series(config: SinSimConfig, rng: np.random.Generator | None = None,
                        support: Grid | None = None, prob: ProbGrid | None = None,
                        zeta: np.ndarray | None = None) -> list[Distribution]:
    """Distributions with log quantile density ``sin(zeta_i x)``, rescaled to ``[0, 1]``."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    support = support or Grid()
    prob = prob or ProbGrid()
    if zeta is None:
        zeta = sin_zeta(config, rng)
    v = np.linspace(0.0, 1.0, config.tabulation)
    unit = Grid(0.0, 1.0, support.m)
    out = []
    for z in np.asarray(zeta, dtype=float):
        d = lqd_inverse(np.sin(z * v), unit, prob)
        out.append(d if support == unit else rescale(d, support))
    return out


def gaussian_shrinking_series(support: Grid | None = None, prob: ProbGrid | None = None,
                              sds=(4.8, 4.0, 3.0, 1.6, 1.15, 1.0)) -> list[Distribution]:
    """Centred Gaussians truncated to ``[-10, 10]`` with shrinking spread."""
    support = support or Grid(-10.0, 10.0, 101)
    prob = prob or ProbGrid()
    return [truncated_gaussian(0.0, sd, support, prob) for sd in sds]


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class ExperimentSpec:
    generator: str = "atm"
    alphas: tuple = (0.5, 0.0, 0.0, 0.0)
    n: int = 101
    n_train: int = 100
    replications: int = 1000
    seed: int = 0
    models: tuple = ("atm_m",)
    presample: int = 50
    candidates: tuple = (1, 2, 3, 4)
    noise: str = "printed"
    control_points: tuple = TABLE_POINTS
    lag_fix: bool = False
    burn_in: int = 100
    grid_size: int = 101
    prob_size: int = 201
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.generator not in ("atm", "sin"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 2 <= self.n_train < self.n:
            raise ValueError("need 2 <= n_train < n")
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "candidates", tuple(int(c) for c in self.candidates))

    def model_specs(self) -> list[ModelSpec]:
        return [ModelSpec.parse(name, candidates=self.candidates, presample=self.presample, config=self.fit)
                for name in self.models]


@dataclass
class MonteCarloResult:
    spec: ExperimentSpec
    records: list  # (replication, model, error) with error NaN on failure
    failures: list  # (replication, model, message)

    def summary(self) -> dict:
        out = {}
        for name in self.spec.models:
            errs = np.array([e for _, m, e in self.records if m == name and np.isfinite(e)])
            nfail = sum(1 for _, m, _ in self.failures if m == name)
            n = errs.size
            out[name] = {
                "mean": float(errs.mean()) if n else float("nan"),
                "se": float(errs.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
                "replications": n,
                "failures": nfail,
            }
        return out


def _generate(spec: ExperimentSpec, rng: np.random.Generator) -> list[Distribution]:
    prob = ProbGrid(spec.prob_size)
    if spec.generator == "atm":
        cfg = SimConfig(spec.alphas, spec.n, spec.burn_in, spec.seed, spec.noise,
                        spec.control_points, spec.grid_size)
        return transports_as_distributions(simulate_atm(cfg, rng), prob)
    cfg = SinSimConfig(spec.alphas, spec.n, spec.seed, spec.burn_in, spec.lag_fix)
    return simulate_sin_series(cfg, rng, Grid(0.0, 1.0, spec.grid_size), prob)


def _replicate(args):
    spec, index, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    dists = _generate(spec, rng)
    train, truth = dists[:spec.n_train], dists[spec.n_train]
    records, failures = [], []
    for name, model in zip(spec.models, spec.model_specs()):
        try:
            pred, _ = model.fit_forecast(train)
            err = wasserstein_distance(truth, pred)
        except (ModelError, ValueError, FloatingPointError) as exc:
            failures.append((index, name, f"{type(exc).__name__}: {exc}"))
            err = float("nan")
        records.append((index, name, err))
    return records, failures


def run_monte_carlo(spec: ExperimentSpec, threads: int = 1, progress=None) -> MonteCarloResult:
    """Forecast element ``n_train + 1`` from the first ``n_train`` in each replication.

    Replication ``r`` uses the ``r``-th child of ``SeedSequence(spec.seed)``,
    so results are identical for any ``threads``.  Failed fits are kept as
    NaN records and listed in ``failures``.
    """
    children = np.random.SeedSequence(spec.seed).spawn(spec.replications)
    tasks = [(spec, r, children[r]) for r in range(spec.replications)]
    records, failures = [], []
    if threads <= 1:
        results = map(_replicate, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        results = pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * threads)))
    try:
        for i, (rec, fail) in enumerate(results):
            records.extend(rec)
            failures.extend(fail)
            if progress is not None:
                progress(i + 1, spec.replications)
    finally:
        if threads > 1:
            pool.shutdown()
    for rep, name, msg in failures:
        log.warning("replication %d, model %s failed: %s", rep, name, msg)
    return MonteCarloResult(spec, records, failures)


# ---------------------------------------------------------------------------
# coupling and rate experiments


def log_linear_slope(y) -> float:
    """Least squares slope of ``log y`` against step index ``1..len(y)``."""
    y = np.asarray(y, dtype=float)
    steps = np.arange(1, y.size + 1)
    return float(np.polyfit(steps, np.log(y), 1)[0])


def coupling_gaps(alpha: float = 0.5, pairs: int = 100, steps: int = 20, seed: int = 0,
                  noise_model: SplineNoiseModel | None = None) -> np.ndarray:
    """Mean ``d1`` gap between two ATM(1) chains driven by the same noise.

    Each pair starts one chain at the identity and the other at a random
    noise draw.  Returns the gap after steps ``1..steps``, averaged over pairs.
    """
    model = noise_model or SplineNoiseModel()
    grid = model.grid
    rng = np.random.default_rng(seed)
    gaps = np.zeros(steps)
    for _ in range(pairs):
        start = model.sample_values(rng, 1)
        noise = model.sample_values(rng, steps)
        a = atm_recursion([alpha], grid.nodes[None, :], noise, grid)
        b = atm_recursion([alpha], start, noise, grid)
        for s in range(steps):
            gaps[s] += d1(TransportMap(grid, a[s]), TransportMap(grid, b[s]))
    return gaps / pairs


def rate_experiment(alpha: float, ns=(100, 200, 400, 800, 1600, 3200), replications: int = 200,
                    seed: int = 0, noise: str = "corrected", control_points=RATE_POINTS,
                    burn_in: int = 100, grid_size: int = 101) -> dict:
    """Mean ``|alpha_hat - alpha|`` of the closed-form ATM(1) fit by series length.

    The fit is applied to the simulated transports directly.  Returns the
    per-``n`` errors and the slope of ``log error`` against ``log n``.
    """
    model = SplineNoiseModel(Grid(0.0, 1.0, grid_size), control_points, noise)
    grid = model.grid
    root = np.random.SeedSequence([seed, len(ns)])
    errors = {}
    for n, child in zip(ns, root.spawn(len(ns))):
        errs = []
        for s in child.spawn(replications):
            rng = np.random.default_rng(s)
            noise_vals = model.sample_values(rng, burn_in + n)
            vals = atm_recursion([alpha], grid.nodes[None, :], noise_vals, grid)[burn_in:]
            errs.append(abs(fit_atm1(TransportBatch(grid, vals)).alpha - alpha))
        errors[int(n)] = float(np.mean(errs))
    x = np.log(np.array(list(errors)))
    y = np.log(np.array(list(errors.values())))
    slope = float(np.polyfit(x, y, 1)[0])
    return {"alpha": alpha, "errors": errors, "slope": slope, "noise": noise}
