"""Removing shrinkage at the fitting stage with mean-anchoring constraints.

The anchored ("umlr") fit forces the residual sums over the below-mean and
above-mean outcome groups to zero. Linear learners solve the constrained
problem exactly through its KKT system; tree ensembles get an exact affine
recalibration layer a + b * f(x). Either way the training calibration slope
returns to ~1, at the cost of a larger RMSE -- that trade is the point.
"""

import numpy as np

from umlr import (
    LearnerConfig,
    anchor_recalibrate,
    estimate_eta,
    fit,
    fit_constrained_linear,
    partition_by_mean,
)

rng = np.random.default_rng(7)
n, p = 300, 60
X = rng.standard_normal((n, p))
beta = np.zeros(p)
beta[:10] = 0.5
y = X @ beta + rng.standard_normal(n)
split = partition_by_mean(y)


def describe(tag, model):
    pred = model.predict(X)
    rep = estimate_eta(y, pred)
    sums = model.group_residual_sums or (np.nan, np.nan)
    print(f"{tag:24s} eta={rep.eta_hat:5.2f}  rmse={rep.rmse:5.2f}  "
          f"group sums=({sums[0]:+.2e}, {sums[1]:+.2e})")


ridge = LearnerConfig(kind="ridge", lam=60.0)
describe("ridge (plain)", fit(ridge, X, y))
describe("ridge (constrained)", fit_constrained_linear(ridge, X, y, split))
describe("ridge (anchored)", anchor_recalibrate(fit(ridge, X, y), X, y, split))

gbt = LearnerConfig(kind="gbt", n_trees=120, max_depth=2, learning_rate=0.1)
base = fit(gbt, X, y)
describe("gbt (plain)", base)
describe("gbt (anchored)", anchor_recalibrate(base, X, y, split))

print("""
The constrained/anchored rows drive both group residual sums to ~0 (and
with them the training slope to ~1). The affine route is the only tractable
one for trees; for linear kinds both routes are available and behave
differently out of distribution: the affine layer rescales every
coefficient, the exact KKT solution adjusts only along cheap directions.
""")
