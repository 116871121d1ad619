"""
Outcomes measured at scattered points
=====================================

When outcomes are observed at survey locations instead of on a raster, the
field is interpolated by ordinary kriging and the circle averages are read
off the kriged surface.
"""

import numpy as np

from spatialamr import (
    Complete,
    InterventionSet,
    OutcomePoints,
    estimate_amr,
    fit_kriging,
    gamma_mixture_effect,
)

rng = np.random.default_rng(3)

###############################################################################
# 40 nodes, half treated, and 2000 survey points whose outcome is a smooth
# background plus the summed effect of the treated nodes plus noise.

nodes = rng.uniform(0, 10, (40, 2))
z = np.zeros(40, dtype=int)
z[rng.permutation(40)[:20]] = 1
survey = rng.uniform(-1, 11, (2000, 2))
dist = np.hypot(*(survey[:, None, :] - nodes[None, :, :]).transpose(2, 0, 1))
y = (np.sin(survey[:, 0] / 2) + gamma_mixture_effect(dist) @ z
     + rng.normal(scale=0.1, size=2000))

###############################################################################
# Fit the variogram automatically, then estimate the AMR curve. The model is
# additive, so the true AMR at distance d is the effect profile f(d) itself.

model = fit_kriging(OutcomePoints(survey, y))
cov = model.covariance
print(f"fitted range {cov.range:.2f}, partial sill {cov.sill:.3f}, nugget {cov.nugget:.4f}")

iv = InterventionSet(nodes, z, Complete(20))
curve = estimate_amr(iv, model, [0.2, 0.4, 0.8, 1.2, 1.6], numpts=64)
for d, est, true in zip(curve.dvec, curve.amr_est, gamma_mixture_effect(curve.dvec)):
    print(f"  d = {d:.1f}   estimate {est:+.3f}   true AMR {true:+.3f}")

###############################################################################
# Near the nodes the effect profile is sharper than the survey spacing can
# resolve, so interpolation flattens it and the estimate is attenuated there.
# Further out the profile is smooth and the estimates track it closely.
