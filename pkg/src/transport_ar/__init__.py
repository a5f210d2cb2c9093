"""Autoregressive models for time series of one-dimensional distributions."""

from .grid import DomainError, Grid, GridMismatchError, MonotoneFn, ProbGrid, natural_cubic_spline
from .algebra import (
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
)
from .distributions import (
    DegenerateInputError,
    Distribution,
    SampleBatch,
    frechet_mean,
    from_samples,
    lqd_inverse,
    rescale,
    truncated_gaussian,
    uniform,
    wasserstein_distance,
)
from .models import (
    Atm1Fit,
    AtmPFit,
    AtmVariant,
    CatFit,
    DivergenceError,
    FitConfig,
    ModelError,
    ModelSpec,
    NonIdentifiableError,
    build_transport_series,
    evaluate_rolling,
    fit_atm1,
    fit_atmp,
    fit_cat,
    forecast_distribution,
    predict_transport,
    select_order,
)

__version__ = "0.1.0"
