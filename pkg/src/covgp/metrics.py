"""Point and probabilistic scores for Gaussian predictive distributions."""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from covgp.objective import BatchEvaluation, coverage, z_score

__all__ = [
    "MetricsReport",
    "point_metrics",
    "crps_gaussian",
    "interval_score",
    "evaluate",
]

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    cov: float
    crps: float
    int_score: float
    alpha: float

    def as_dict(self):
        return asdict(self)


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise ValueError("predictive standard deviation must be positive")
    return sigma


def point_metrics(predictions, truths):
    """Mean absolute error and root mean squared error."""
    mu = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(truths, dtype=float).reshape(-1)
    if mu.shape != y.shape:
        raise ValueError(f"{mu.size} predictions for {y.size} truths")
    if mu.size == 0:
        raise ValueError("no predictions to score")
    r = y - mu
    return float(np.mean(np.abs(r))), float(np.sqrt(np.mean(r * r)))


def crps_gaussian(y, mu, sigma):
    """CRPS of ``N(mu, sigma^2)`` at outcome ``y`` (closed form, vectorised)."""
    sigma = _check_sigma(sigma)
    z = (np.asarray(y, dtype=float) - mu) / sigma
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)
    return float(out) if np.ndim(out) == 0 else out


def interval_score(y, mu, sigma, alpha):
    """Interval score of the central ``alpha`` interval ``mu ± z_alpha sigma``.

    Width plus ``2 / (1 - alpha)`` times the distance by which ``y`` falls
    outside the interval.
    """
    sigma = _check_sigma(sigma)
    y = np.asarray(y, dtype=float)
    half = z_score(alpha) * sigma
    lower = mu - half
    upper = mu + half
    scale = 2.0 / (1.0 - alpha)
    out = (
        (upper - lower)
        + scale * np.maximum(lower - y, 0.0)
        + scale * np.maximum(y - upper, 0.0)
    )
    return float(out) if np.ndim(out) == 0 else out


def evaluate(moments, truths, alpha=0.95):
    """Aggregate test-set metrics for a set of Gaussian predictions."""
    y = np.asarray(truths, dtype=float).reshape(-1)
    mu = np.asarray(moments.mean, dtype=float).reshape(-1)
    sigma = np.sqrt(np.asarray(moments.variance, dtype=float).reshape(-1))
    mae, rmse = point_metrics(mu, y)
    ev = BatchEvaluation(mu, sigma ** 2, y)
    return MetricsReport(
        mae=mae,
        rmse=rmse,
        cov=coverage(ev, alpha),
        crps=float(np.mean(crps_gaussian(y, mu, sigma))),
        int_score=float(np.mean(interval_score(y, mu, sigma, alpha))),
        alpha=float(alpha),
    )
