"""
A series that is not stationary
===============================

Six centred Gaussians with shrinking spread.  Models built on
consecutive differences carry the trend forward; models built on
deviations from the barycenter pull the forecast back towards it.
"""

from transport_ar import ModelSpec
from transport_ar.simulation import gaussian_shrinking_series

dists = gaussian_shrinking_series()
print("observed variances:", [round(d.variance(), 3) for d in dists])

for name in ("atm_d(1)", "cat_d", "atm_m(1)", "cat_m"):
    pred, _ = ModelSpec.parse(name).fit_forecast(dists)
    print(f"{name:9s} forecast variance for t=7: {pred.variance():.3f}")
