"""Likelihood-only training next to coverage-constrained training.

LOOL picks the hyperparameters that maximize the leave-one-out likelihood of
a batch. MM adds constraints that the batch's empirical coverage match five
confidence levels, and solves by the method of multipliers. Both use the
same batch and neighbor sets.
"""

import numpy as np

from covgp import (
    BayesOptConfig,
    MaternParams,
    MultipliersConfig,
    SearchSpace,
    SyntheticSpec,
    build_index,
    evaluate,
    predict,
    sample_batch,
    sample_gp,
    split,
    train_constrained,
    train_unconstrained,
)

data = sample_gp(SyntheticSpec(2000, MaternParams(0.425, 0.675, tau2=1e-10), seed=2))
train, test = split(data, 0.5, seed=2)
index = build_index(train.features)
batch = sample_batch(train.n, 512, seed=2)
space = SearchSpace.matern()

lool = train_unconstrained(train, index, batch, "lool", space, 50, BayesOptConfig(5, 30, seed=2))
mm = train_constrained(train, index, batch, space, 50, MultipliersConfig(inner=BayesOptConfig(3, 10, seed=2)))

# The outer loop doubles beta each round and moves lambda by beta * (coverage - level).
print(" n   beta   LOOL term    coverage - level at (0.90 ... 0.99)")
for n, step in enumerate(mm.trace, start=1):
    print(f"{n:2d} {step.beta_used:6.0f} {step.q:11.2f}    " + " ".join(f"{r:+.3f}" for r in step.residual))

for name, res in (("LOOL", lool), ("MM", mm)):
    rep = evaluate(predict(test.features, train, index, 50, res.theta), test.responses, 0.95)
    print(f"{name:5s} nu={res.theta.nu:.3f} rho={res.theta.rho:.3f}  "
          f"test coverage {rep.cov:.3f}  RMSE {rep.rmse:.4f}  CRPS {rep.crps:.4f}")
