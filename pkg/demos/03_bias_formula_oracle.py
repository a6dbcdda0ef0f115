"""The closed-form ATE bias of shrinkage-biased outcome models, verified.

Instead of fitting models, inject the linear-shrinkage pattern directly
into the oracle outcome surfaces: out-of-distribution predictions get slope
eta_out toward a weighted training-arm mean. The plug-in ATE error then
matches the closed-form bias expression replicate by replicate, to floating
point. The augmented (doubly robust) estimator with the *true* propensity
inherits the same bias -- weighting cannot repair in-sample-calibrated
outcome models.
"""

import numpy as np

from umlr import DgpConfig
from umlr.simulation import shrinkage_oracle_study

dgp = DgpConfig(n=1000, p=200, s=10, seed=1)
out = shrinkage_oracle_study(dgp, reps=200, eta_in=1.0, eta_out=0.5, w=1.0)

per_rep_gap = np.max(np.abs(out["or_bias"] - out["closed_form"]))
print(f"max |plug-in bias - closed form| over 200 replicates: {per_rep_gap:.2e}")

mean_or = out["or_bias"].mean()
mean_aipw = out["aipw_bias"].mean()
se = (out["aipw_bias"] - out["or_bias"]).std(ddof=1) / np.sqrt(200)
print(f"mean plug-in bias:   {mean_or:+.3f}")
print(f"mean augmented bias: {mean_aipw:+.3f}  (difference {mean_aipw-mean_or:+.4f}, "
      f"mc se {se:.4f})")

print("""
With eta_out = 0.5 and w = 1 the formula predicts a bias of
(1-pi)*0.5*gap1 + pi*0.5*gap0, where the gaps are the covariate-shift
differences in the oracle surfaces across arms. The augmented estimator is
exactly as biased as the plug-in: its correction terms average to zero
because each arm's model is already calibrated on its own arm.
""")
