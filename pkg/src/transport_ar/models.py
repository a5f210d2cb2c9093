"""Autoregressive transport models: estimation, prediction, validation.

Two ways of turning a distributional series into transports are supported:
``MEAN`` (barycenter to each distribution) and ``DIFFERENCE`` (each
distribution to the next).  On the transport series we fit

* ATM(1) in closed form, choosing between the ``T`` and ``T^{-1}`` regressors,
* ATM(p) by back-propagating through the chain of ``⊙``-scaled compositions,
* CAT, whose coefficient varies over the support, node by node.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np

from .algebra import TransportBatch, TransportMap, ominus, pushforward
from .algebra import _pin
from .distributions import Distribution, cdf_rows, frechet_mean, quantile_matrix, wasserstein_distance
from .grid import integrate, isotonic_projection

log = logging.getLogger(__name__)

__all__ = [
    "AtmVariant",
    "Atm1Fit",
    "AtmPFit",
    "CatFit",
    "FitConfig",
    "ModelSpec",
    "ModelError",
    "NonIdentifiableError",
    "DivergenceError",
    "build_transport_series",
    "build_transport_batch",
    "fit_atm1",
    "fit_atmp",
    "fit_cat",
    "atmp_loss",
    "predict_transport",
    "forecast_distribution",
    "select_order",
    "evaluate_rolling",
    "discrepancy",
]


class ModelError(RuntimeError):
    """A model could not be fitted to the data."""


class NonIdentifiableError(ModelError):
    """All transports are (numerically) the identity; no coefficient is identifiable."""


class DivergenceError(ModelError):
    """The ATM(p) loss became non-finite; reduce the step size."""


class AtmVariant(str, enum.Enum):
    MEAN = "mean"
    DIFFERENCE = "difference"

    @classmethod
    def parse(cls, value) -> "AtmVariant":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        aliases = {"m": cls.MEAN, "mean": cls.MEAN, "meanbased": cls.MEAN, "mean-based": cls.MEAN,
                   "d": cls.DIFFERENCE, "diff": cls.DIFFERENCE, "difference": cls.DIFFERENCE,
                   "differencebased": cls.DIFFERENCE, "difference-based": cls.DIFFERENCE}
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown variant {value!r}") from None


@dataclass(frozen=True)
class FitConfig:
    eta: float = 1.0
    clip: float = 10.0
    max_iter: int = 500
    tol: float = 1e-6
    c_box: float = 5.0
    seed: int = 0
    # halve eta whenever a step would increase the loss
    backtrack: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.c_box > 0:
            raise ValueError("c_box must be positive")


@dataclass
class Atm1Fit:
    alpha: float
    loss_plus: float
    loss_minus: float
    chosen_sign: str
    rho: dict

    @property
    def p(self) -> int:
        return 1

    @property
    def alphas(self) -> tuple:
        return (self.alpha,)

    def sign_by_rho(self) -> str:
        """Sign selected by comparing ``(rho1)^2 / rho0`` for the two regressors."""
        r = self.rho
        plus = r["rho1_plus"] ** 2 / r["rho0_plus"] if r["rho0_plus"] > 0 else 0.0
        minus = r["rho1_minus"] ** 2 / r["rho0_minus"] if r["rho0_minus"] > 0 else 0.0
        return "-" if plus < minus else "+"

    def to_dict(self) -> dict:
        return {"model": "atm", "p": 1, "alphas": [self.alpha], "chosen_sign": self.chosen_sign,
                "losses": {"plus": self.loss_plus, "minus": self.loss_minus}, "rho": dict(self.rho)}


@dataclass
class AtmPFit:
    alphas: tuple
    loss_trace: list
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.alphas)

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    def to_dict(self) -> dict:
        return {"model": "atm", "p": self.p, "alphas": list(self.alphas),
                "losses": {"final": self.loss, "trace": list(self.loss_trace)},
                "iterations": self.iterations, "converged": self.converged,
                "diagnostics": dict(self.diagnostics)}


@dataclass
class CatFit:
    grid_nodes: np.ndarray
    beta: np.ndarray
    chosen_sign: np.ndarray
    degenerate: np.ndarray
    loss_plus: np.ndarray
    loss_minus: np.ndarray

    @property
    def p(self) -> int:
        return 1

    def to_dict(self) -> dict:
        return {"model": "cat", "p": 1,
                "beta": {"x": self.grid_nodes.tolist(), "beta": self.beta.tolist(),
                         "sign": self.chosen_sign.tolist(), "degenerate": self.degenerate.tolist()},
                "losses": {"plus": float(self.loss_plus.sum()), "minus": float(self.loss_minus.sum())}}


Fit = Union[Atm1Fit, AtmPFit, CatFit]


# ---------------------------------------------------------------------------
# transport series


def _quantile_at_rows(Q: np.ndarray, levels: np.ndarray, u: np.ndarray) -> np.ndarray:
    # row i of Q evaluated at u[i] (u may be a single shared row)
    n, k = Q.shape
    U = np.broadcast_to(u, (n, u.shape[-1]))
    j = np.clip(np.searchsorted(levels, U, side="right"), 1, k - 1)
    w = (U - levels[j - 1]) / (levels[j] - levels[j - 1])
    w = np.clip(w, 0.0, 1.0)
    rows = np.arange(n)[:, None]
    q0 = Q[rows, j - 1]
    return q0 + w * (Q[rows, j] - q0)


def build_transport_batch(variant, dists: Sequence[Distribution], projection: str = "running_max") -> TransportBatch:
    """Transport series as a :class:`TransportBatch`.

    ``MEAN`` gives ``mu_i ⊖ mu_F`` for every ``i`` (``mu_F`` the barycenter),
    ``DIFFERENCE`` gives ``mu_{i+1} ⊖ mu_i``.  ``projection="isotonic"``
    re-projects each estimated transport by least squares isotonic
    regression instead of the default running maximum.
    """
    variant = AtmVariant.parse(variant)
    dists = list(dists)
    if len(dists) < 2:
        raise ValueError("need at least two distributions")
    Q = quantile_matrix(dists)
    grid = dists[0].support
    levels = dists[0].prob.closed_levels
    x = grid.nodes
    if variant is AtmVariant.MEAN:
        qf = Q.mean(axis=0)
        u = cdf_rows(qf[None, :], levels, x)
        vals = _quantile_at_rows(Q, levels, u)
    else:
        u = cdf_rows(Q[:-1], levels, x)
        vals = _quantile_at_rows(Q[1:], levels, u)
    if projection == "isotonic":
        vals = isotonic_projection(vals, grid.s1, grid.s2)
    elif projection != "running_max":
        raise ValueError(f"unknown projection {projection!r}")
    return TransportBatch(grid, _pin(vals, grid))


def build_transport_series(variant, dists: Sequence[Distribution], projection: str = "running_max") -> list:
    """Transports ``mu_i ⊖ mu_F`` (MEAN) or ``mu_{i+1} ⊖ mu_i`` (DIFFERENCE) as a list."""
    return build_transport_batch(variant, dists, projection).maps()


# ---------------------------------------------------------------------------
# ATM(1)


def _as_batch(transports) -> TransportBatch:
    if isinstance(transports, TransportBatch):
        return transports
    return TransportBatch.from_maps(transports)


def fit_atm1(transports, floor: float = 1e-14) -> Atm1Fit:
    """Closed-form least squares for ATM(1) with sign selection."""
    batch = _as_batch(transports)
    n = len(batch)
    if n < 2:
        raise ValueError("need at least two transports")
    grid = batch.grid
    x = grid.nodes
    dp = batch.values - x
    dm = x - batch.inverse_values
    if integrate(dp**2, grid=grid).mean() <= floor:
        raise NonIdentifiableError("all transports are the identity; alpha is not identifiable")
    resp = dp[1:]
    prev_p = dp[:-1]
    prev_m = dm[:-1]
    rho = {
        "rho1_plus": float(integrate(resp * prev_p, grid=grid).mean()),
        "rho1_minus": float(integrate(resp * prev_m, grid=grid).mean()),
        "rho0_plus": float(integrate(prev_p**2, grid=grid).mean()),
        "rho0_minus": float(integrate(prev_m**2, grid=grid).mean()),
        "second_moment": float(integrate(resp**2, grid=grid).mean()),
    }
    a_plus = rho["rho1_plus"] / rho["rho0_plus"] if rho["rho0_plus"] > floor else 0.0
    a_minus = rho["rho1_minus"] / rho["rho0_minus"] if rho["rho0_minus"] > floor else 0.0
    # l(alpha_hat) = mean int (T_i - x)^2 - rho1^2 / rho0
    loss_plus = rho["second_moment"] - a_plus * rho["rho1_plus"]
    loss_minus = rho["second_moment"] - a_minus * rho["rho1_minus"]
    # the minus regressor x - T^{-1}(x) already carries the sign, so alpha_minus is used as is
    if loss_plus <= loss_minus:
        return Atm1Fit(a_plus, loss_plus, loss_minus, "+", rho)
    return Atm1Fit(a_minus, loss_plus, loss_minus, "-", rho)


# ---------------------------------------------------------------------------
# ATM(p)


class _Chain:
    """Forward/backward passes of the ATM(p) loss over interior grid nodes."""

    def __init__(self, batch: TransportBatch, p: int):
        n = len(batch)
        self.p = p
        self.n_eff = n - p
        self.h = batch.grid.spacing
        # residuals and derivatives in alpha both carry the support width;
        # dividing it out makes the descent path invariant to affine rescaling
        self.scale = 1.0 / batch.grid.width**2
        # lags[k - 1] holds T_{i-k} for every response index i = p..n-1
        self.lags = [batch[p - k: n - k] for k in range(1, p + 1)]
        nodes = batch.grid.nodes[1:-1]
        self.x0 = np.broadcast_to(nodes, (self.n_eff, nodes.size)).copy()
        self.target = batch.values[p:, 1:-1]

    def forward(self, alphas):
        R = [self.x0]
        for k in range(self.p, 0, -1):
            R.append(self.lags[k - 1].apply(alphas[k - 1], R[-1]))
        return R

    def loss(self, R) -> float:
        # endpoints are pinned so the trapezoid integral is h * sum over interior nodes
        return float(self.h * np.sum((self.target - R[-1]) ** 2) / self.n_eff)

    def gradient(self, alphas, R, rng) -> np.ndarray:
        """Descent direction: sum over nodes, averaged over responses."""
        L = 2.0 * (self.target - R[-1])
        D = np.ones_like(L)
        grad = np.empty(self.p)
        for k in range(1, self.p + 1):
            dx, da = self.lags[k - 1].jet(alphas[k - 1], R[self.p - k], rng)
            grad[k - 1] = self.scale * np.sum(L * D * da) / self.n_eff
            D = D * dx
        return grad


def atmp_loss(transports, alphas) -> float:
    """``L_n(alpha_1..alpha_p)``: mean integrated squared one-step residual."""
    alphas = tuple(float(a) for a in alphas)
    batch = _as_batch(transports)
    chain = _Chain(batch, len(alphas))
    return chain.loss(chain.forward(alphas))


def fit_atmp(transports, p: int, config: FitConfig | None = None, init: Sequence[float] | None = None) -> AtmPFit:
    """Back-propagation fit of ATM(p).

    Starts from the closed-form ATM(1) coefficient for the first lag and
    zero for the others unless ``init`` is given.  Gradients are
    clipped componentwise, parameters are kept in ``[-c_box, c_box]``.  When
    ``config.backtrack`` is set a step that would increase the loss is
    retried with half the step size.
    """
    config = config or FitConfig()
    batch = _as_batch(transports)
    n = len(batch)
    if p < 1:
        raise ValueError("order p must be at least 1")
    if p >= n:
        raise ValueError(f"need more transports than the order (n={n}, p={p})")
    rng = np.random.default_rng(config.seed)
    chain = _Chain(batch, p)

    if init is None:
        a1 = fit_atm1(batch[p - 1:]).alpha
        alphas = np.zeros(p)
        alphas[0] = a1
    else:
        alphas = np.asarray(init, dtype=float).copy()
        if alphas.shape != (p,):
            raise ValueError(f"init must have {p} values")
    alphas = np.clip(alphas, -config.c_box, config.c_box)

    R = chain.forward(alphas)
    loss = chain.loss(R)
    if not math.isfinite(loss):
        raise DivergenceError("initial loss is not finite")
    trace = [loss]
    eta = config.eta
    converged = False
    backtracks = 0
    integer_hits = 0
    it = 0
    for it in range(1, config.max_iter + 1):
        grad = np.clip(chain.gradient(alphas, R, rng), -config.clip, config.clip)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient at iteration {it}")
        while True:
            cand = np.clip(alphas + eta * grad, -config.c_box, config.c_box)
            R_new = chain.forward(cand)
            new_loss = chain.loss(R_new)
            if not config.backtrack:
                break
            if math.isfinite(new_loss) and new_loss <= loss:
                break
            eta *= 0.5
            backtracks += 1
            if eta < 1e-12 * config.eta:
                cand, R_new, new_loss = alphas, R, loss
                break
        if not math.isfinite(new_loss):
            raise DivergenceError(f"loss became non-finite at iteration {it}; reduce eta")
        if np.any((np.floor(cand) != np.floor(alphas)) | (cand == np.round(cand))):
            integer_hits += 1
        change = abs(loss - new_loss) / max(abs(loss), 1e-300)
        alphas, R, loss = cand, R_new, new_loss
        trace.append(loss)
        if change < config.tol or loss == 0.0:
            converged = True
            break
    diagnostics = {"eta_final": eta, "backtracks": backtracks, "integer_crossings": integer_hits}
    return AtmPFit(tuple(float(a) for a in alphas), trace, it, converged, diagnostics)


# ---------------------------------------------------------------------------
# CAT


def fit_cat(transports, floor: float = 1e-14, box: float = 1.0, smooth: int = 0) -> CatFit:
    """Pointwise least squares for the concurrent model.

    Nodes where the predictor has no spread (always the two endpoints) get
    ``beta = 0`` and are flagged degenerate.  ``smooth > 0`` applies a
    centred moving average of that half-width afterwards.
    """
    batch = _as_batch(transports)
    if len(batch) < 2:
        raise ValueError("need at least two transports")
    x = batch.grid.nodes
    dp = batch.values - x
    dm = x - batch.inverse_values
    resp, prev_p, prev_m = dp[1:], dp[:-1], dm[:-1]
    r1p = (resp * prev_p).sum(axis=0)
    r1m = (resp * prev_m).sum(axis=0)
    r0p = (prev_p**2).sum(axis=0)
    r0m = (prev_m**2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        bp = np.where(r0p > floor, r1p / r0p, 0.0)
        bm = np.where(r0m > floor, r1m / r0m, 0.0)
    lp = ((resp - bp * prev_p) ** 2).sum(axis=0)
    lm = ((resp - bm * prev_m) ** 2).sum(axis=0)
    plus = lp <= lm
    beta = np.where(plus, bp, bm)
    degenerate = (r0p <= floor) & (r0m <= floor)
    beta = np.where(degenerate, 0.0, beta)
    if smooth > 0:
        w = 2 * smooth + 1
        padded = np.pad(beta, smooth, mode="edge")
        beta = np.convolve(padded, np.ones(w) / w, mode="valid")
        beta = np.where(degenerate, 0.0, beta)
    beta = np.clip(beta, -box, box)
    sign = np.where(plus, "+", "-")
    return CatFit(np.asarray(x).copy(), beta, sign, degenerate, lp, lm)


# ---------------------------------------------------------------------------
# prediction


def predict_transport(fit: Fit, recent) -> TransportMap:
    """Point prediction of the next transport from the last ``p`` ones.

    ``recent`` (a list of maps or a batch) is in chronological order; the
    oldest is scaled by ``alpha_p`` and applied first.
    """
    B = _as_batch(recent)
    if len(B) != fit.p:
        raise ValueError(f"expected {fit.p} recent transports, got {len(B)}")
    if isinstance(fit, CatFit):
        _, proj = B.circledcirc(fit.beta)
        return TransportMap(B.grid, proj[0])
    return TransportMap.from_values(B.grid, _chain_apply(fit.alphas, B))


def forecast_distribution(variant, fit: Fit, dists: Sequence[Distribution], transports=None) -> Distribution:
    """One-step-ahead forecast of the next distribution.

    MEAN pushes the barycenter of ``dists`` through the predicted transport;
    DIFFERENCE pushes the last distribution.
    """
    variant = AtmVariant.parse(variant)
    dists = list(dists)
    B = build_transport_batch(variant, dists) if transports is None else _as_batch(transports)
    if len(B) < fit.p:
        raise ValueError("series too short for the fitted order")
    T_next = predict_transport(fit, B[len(B) - fit.p:])
    if variant is AtmVariant.MEAN:
        return pushforward(T_next, frechet_mean(dists))
    return pushforward(T_next, dists[-1])


def discrepancy(alphas, true_alphas, transports) -> float:
    """Integrated squared gap between fitted and true ATM(p) predictions,
    averaged over all length-p windows of the series."""
    alphas = tuple(alphas)
    true_alphas = tuple(true_alphas)
    p = len(true_alphas)
    if len(alphas) != p:
        raise ValueError("coefficient vectors differ in length")
    B = _as_batch(transports)
    total = 0.0
    count = 0
    for s in range(len(B) - p + 1):
        win = B[s:s + p]
        gap = _chain_apply(alphas, win) - _chain_apply(true_alphas, win)
        total += float(integrate(gap**2, grid=B.grid))
        count += 1
    return total / count


def _chain_apply(alphas, window: TransportBatch) -> np.ndarray:
    # oldest map of the window is scaled by the last coefficient
    p = len(alphas)
    X = window.grid.nodes[None, :]
    for k in range(p, 0, -1):
        X = window[p - k].apply(alphas[k - 1], X)
    return X[0]


# ---------------------------------------------------------------------------
# model specs, order selection, rolling evaluation


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: ATM of a fixed or validated order, or CAT.

    ``order=None`` selects the ATM order by rolling-window validation over
    ``candidates`` using a pre-sample of length ``presample`` (and training
    windows of the same length unless ``window`` is given).
    """

    variant: AtmVariant = AtmVariant.MEAN
    kind: str = "atm"
    order: int | None = 1
    candidates: tuple = (1, 2, 3, 4, 5)
    presample: int | None = None
    window: int | None = None
    config: FitConfig = FitConfig()

    def __post_init__(self):
        object.__setattr__(self, "variant", AtmVariant.parse(self.variant))
        if self.kind not in ("atm", "cat"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "candidates", tuple(int(c) for c in self.candidates))

    @classmethod
    def parse(cls, name: str, **kwargs) -> "ModelSpec":
        """Parse names like ``atm_m``, ``atm_d(2)``, ``cat_m``."""
        s = name.strip().lower()
        order = None
        if "(" in s:
            s, _, rest = s.partition("(")
            order = int(rest.rstrip(")"))
        kind, _, v = s.partition("_")
        variant = AtmVariant.parse(v or "m")
        if kind == "cat":
            return cls(variant=variant, kind="cat", order=1, **kwargs)
        return cls(variant=variant, kind="atm", order=order, **kwargs)

    @property
    def name(self) -> str:
        tag = "m" if self.variant is AtmVariant.MEAN else "d"
        if self.kind == "cat":
            return f"cat_{tag}"
        return f"atm_{tag}" if self.order is None else f"atm_{tag}({self.order})"

    def with_order(self, p: int) -> "ModelSpec":
        return ModelSpec(self.variant, self.kind, p, self.candidates, self.presample, self.window, self.config)

    def fit(self, transports, init=None) -> Fit:
        if self.kind == "cat":
            return fit_cat(transports)
        if self.order is None:
            raise ValueError("order must be fixed before fitting; use fit_forecast")
        if self.order == 1:
            return fit_atm1(transports)
        return fit_atmp(transports, self.order, self.config, init=init)

    def fit_forecast(self, dists: Sequence[Distribution]) -> tuple[Distribution, Fit]:
        dists = list(dists)
        spec = self
        if self.kind == "atm" and self.order is None:
            k = self.presample or len(dists) // 2
            m = self.window or (len(dists) - k)
            p = select_order(dists, k, m, self.candidates, self.config, variant=self.variant)
            spec = self.with_order(p)
        transports = build_transport_batch(spec.variant, dists)
        fit = spec.fit(transports)
        return forecast_distribution(spec.variant, fit, dists, transports), fit


def _min_length(variant: AtmVariant, p: int) -> int:
    # smallest training window that leaves at least one response for order p
    return p + 1 if variant is AtmVariant.MEAN else p + 2


def select_order(dists: Sequence[Distribution], presample_k: int, window_m: int, candidates,
                 config: FitConfig | None = None, variant=AtmVariant.MEAN,
                 return_errors: bool = False):
    """Rolling-window choice of the ATM order.

    The last ``presample_k`` distributions are each predicted from the
    ``window_m`` distributions before them; the candidate with the smallest
    summed Wasserstein error wins (ties go to the smaller order).
    """
    variant = AtmVariant.parse(variant)
    config = config or FitConfig()
    dists = list(dists)
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ValueError("candidate set is empty")
    n = len(dists)
    if presample_k < 1 or window_m < 1:
        raise ValueError("presample and window lengths must be positive")
    if n < presample_k + window_m:
        raise ValueError(f"series of length {n} is shorter than presample + window "
                         f"({presample_k} + {window_m})")
    if len(candidates) == 1:
        return (candidates[0], {candidates[0]: float("nan")}) if return_errors else candidates[0]
    windows = []
    for t in range(n - presample_k, n):
        train = dists[t - window_m:t]
        windows.append((train, build_transport_batch(variant, train), dists[t]))
    errors = {}
    for p in candidates:
        if window_m < _min_length(variant, p):
            errors[p] = math.inf
            continue
        spec = ModelSpec(variant=variant, kind="atm", order=p, config=config)
        total = 0.0
        warm = None
        try:
            for train, batch, target in windows:
                if p == 1:
                    fit = spec.fit(batch)
                else:
                    # consecutive windows overlap, so the previous optimum is a good start
                    fit = spec.fit(batch, init=warm)
                    warm = fit.alphas
                pred = forecast_distribution(variant, fit, train, batch)
                total += wasserstein_distance(target, pred)
        except ModelError as exc:
            log.info("order %d rejected during validation: %s", p, exc)
            total = math.inf
        errors[p] = total
    best = min(candidates, key=lambda c: (errors[c], c))
    if not math.isfinite(errors[best]):
        raise ModelError("no candidate order could be fitted during validation")
    return (best, errors) if return_errors else best


def evaluate_rolling(dists: Sequence[Distribution], k: int, spec: ModelSpec, return_details: bool = False):
    """Average one-step Wasserstein error over rolling training windows of length ``k``.

    Windows start at ``s = k+1, ..., n-k`` (1-based); when ``spec.order`` is
    None the order is re-selected in each window using the ``k``
    distributions before it as pre-sample.
    """
    dists = list(dists)
    n = len(dists)
    if n <= 2 * k:
        raise ValueError(f"need more than 2k = {2 * k} distributions, got {n}")
    errors = []
    orders = []
    for s in range(k + 1, n - k + 1):
        start = s - 1
        train = dists[start:start + k]
        target = dists[start + k]
        if spec.kind == "atm" and spec.order is None:
            p = select_order(dists[start - k:start + k], k, k, spec.candidates, spec.config, spec.variant)
            use = spec.with_order(p)
        else:
            use = spec
        transports = build_transport_batch(use.variant, train)
        fit = use.fit(transports)
        pred = forecast_distribution(use.variant, fit, train, transports)
        errors.append(wasserstein_distance(target, pred))
        orders.append(fit.p)
    loss = float(np.sum(errors) / (n - 2 * k))
    if return_details:
        return loss, {"errors": errors, "orders": orders}
    return loss
