"""
Forecasting a simulated series of distributions
===============================================

Simulate transports from an order-two recursion, read each one as a
quantile function, then compare one-step forecasts of several models
against the held-out last element.
"""

import numpy as np

from transport_ar import ModelSpec, ProbGrid, wasserstein_distance
from transport_ar.simulation import SimConfig, simulate_atm, transports_as_distributions

cfg = SimConfig(alphas=(0.5, -0.3), n=101, seed=11, noise="corrected")
dists = transports_as_distributions(simulate_atm(cfg), ProbGrid(201))
train, truth = dists[:100], dists[100]

for name in ("atm_m(1)", "atm_m(2)", "atm_m", "atm_d(1)", "cat_m", "cat_d"):
    spec = ModelSpec.parse(name, candidates=(1, 2, 3), presample=50)
    pred, fit = spec.fit_forecast(train)
    coef = "beta(x)" if name.startswith("cat") else np.round(fit.alphas, 3)
    print(f"{name:10s} order {fit.p}  coefficients {coef}  error {wasserstein_distance(truth, pred):.4f}")
