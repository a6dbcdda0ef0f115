"""A desk-scale Monte-Carlo study with confidence-interval coverage.

Runs the generate-fit-estimate-interval loop at a reduced size, then prints
the summary table: signed and absolute bias (percent of the true ATE),
RMSE, interval coverage, and the out-of-distribution calibration slopes of
the per-arm models. The full-scale study behind the acceptance gate uses
n=500/p=200 with 100 replicates and B=200; this demo trades size for speed.

Replicates derive their seeds from (seed, index), so any worker count gives
byte-identical summaries.
"""

import time

from umlr import DgpConfig, LearnerConfig, run_monte_carlo

dgp = DgpConfig(n=250, p=100, s=8, mu1=6.0, mu0=0.0, gamma_scale=0.3,
                sigma=2.0, seed=99)
learner = LearnerConfig(kind="ridge", lam=125.0)

t0 = time.time()
summaries = run_monte_carlo(
    dgp, learner,
    scenario=[("t_learner", "mlr"), ("t_learner", "umlr")],
    reps=60, B=150, collect_slopes=True, umlr_route="anchored", workers=2,
)
print(f"{'mode':5s} {'bias%':>8s} {'|bias|%':>8s} {'rmse':>6s} {'cover':>6s} "
      f"{'slope1':>7s} {'slope0':>7s}")
for s in summaries:
    print(f"{s.mode:5s} {s.bias_pct_signed:8.2f} {s.bias_pct_abs:8.2f} "
          f"{s.rmse:6.3f} {s.coverage:6.2f} {s.slope_out_1:7.2f} {s.slope_out_0:7.2f}")
print(f"\n{len(summaries[0].to_dict())} summary fields per row; "
      f"elapsed {time.time()-t0:.0f}s")

print("""
The plain rows show the signature pattern: a consistently signed bias with
intervals that rarely cover the truth; the anchored rows are near-unbiased
with honest coverage and visibly higher out-of-distribution slopes. The
same study is available from the command line:

  umlr simulate --n 250 --p 100 --s 8 --mu1 6 --gamma-scale 0.3 --sigma 2 \\
      --lam 125 --reps 60 --bootstrap 150 --estimator t --mode both \\
      --umlr-route anchored --seed 99 --out study.json
""")
