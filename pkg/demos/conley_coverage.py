"""
How well do spatial-HAC intervals cover?
========================================

Conley standard errors weight cross-node score products by a kernel of the
inter-node distance. They are consistent when each node interacts with a
vanishing share of the sample. With 200 nodes, how local must the
interference be for 95% intervals to reach their nominal level?
"""

import warnings

import numpy as np

from spatialamr import (
    InterventionSet,
    KernelSpec,
    additive_truth,
    jittered_grid_model,
    truncated_gamma_effect,
)
from spatialamr.estimator import CircleAverageTable, amr_contrast, circle_plan
from spatialamr.inference import conley_curve

dvec = np.array([0.25, 0.5, 0.75, 1.0])
warnings.simplefilter("ignore", RuntimeWarning)

###############################################################################
# For each effect support we set the cutoff to support + max(d), the furthest
# reach at which one node's treatment can move another node's circle average.

for support in (1.0, 1.5, 2.5):
    model = jittered_grid_model(20, 10, seed=1, effect_fn=truncated_gamma_effect(support))
    effects = model.effects()
    _, truth = additive_truth(model, dvec)
    plan = circle_plan(model.baseline, model.nodes, dvec)
    spec = KernelSpec("uniform", support + dvec.max())
    rng = np.random.default_rng(7)
    hits = []
    for _ in range(200):
        z = (rng.random(model.n) < 0.5).astype(int)
        mu, _ = plan.apply(model.realize(z, effects))
        iv = InterventionSet(model.nodes, z, model.design)
        est = amr_contrast(z, mu, "hajek")
        cc = conley_curve(iv, CircleAverageTable(dvec, mu, None, plan.numpts), spec, est, edf=True)
        hits.append((cc["ci_lo"] <= truth) & (truth <= cc["ci_hi"]))
    print(f"support {support}: coverage {np.round(np.mean(hits, axis=0), 3)}")

###############################################################################
# Coverage falls as the support widens: the kernel window then holds a large
# share of the 200 nodes and the variance estimate becomes noisy and biased
# low, even after the effective-degrees-of-freedom rescaling.
