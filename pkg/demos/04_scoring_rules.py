"""Scoring Gaussian predictions: CRPS, interval score and coverage."""

import numpy as np

from covgp import crps_gaussian, interval_score
from covgp.kriging import PosteriorMoments
from covgp.metrics import evaluate

rng = np.random.default_rng(0)
y = rng.standard_normal(5000)

# The same point predictions with under-, well- and over-dispersed variances.
# CRPS and INT both reward the calibrated one; coverage alone only checks the band.
for sigma in (0.5, 1.0, 2.0):
    rep = evaluate(PosteriorMoments(np.zeros_like(y), np.full_like(y, sigma ** 2)), y, alpha=0.95)
    print(f"sigma={sigma}: cov {rep.cov:.3f}  crps {rep.crps:.4f}  int {rep.int_score:.3f}")

# A miss is charged 2 / (1 - alpha) per unit distance outside the interval.
print("\nINT at y = 3 with a N(0, 1) forecast:", interval_score(3.0, 0.0, 1.0, 0.95))
print("CRPS shrinks to |y - mu| as sigma -> 0:", crps_gaussian(1.0, 0.0, 1e-8))
