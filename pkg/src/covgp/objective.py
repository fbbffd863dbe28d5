"""Batch losses, coverage and the augmented Lagrangian."""

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

__all__ = [
    "BatchEvaluation",
    "ConfidenceLevels",
    "LagrangeState",
    "z_score",
    "mse_loss",
    "lool_loss",
    "coverage",
    "constraint_residual",
    "augmented_lagrangian",
]

_STD_NORMAL = NormalDist()


def z_score(alpha):
    """Half-width, in standard deviations, of the central ``alpha`` interval."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {alpha!r}")
    return _STD_NORMAL.inv_cdf(0.5 * (1.0 + alpha))


@dataclass(frozen=True)
class BatchEvaluation:
    """Posterior moments of the batch points next to their true responses."""

    mean: np.ndarray
    variance: np.ndarray
    truths: np.ndarray
    batch_ids: np.ndarray = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.variance, dtype=float))
        y = np.atleast_1d(np.asarray(self.truths, dtype=float))
        if not (mean.shape == var.shape == y.shape) or mean.ndim != 1:
            raise ValueError(
                f"mean, variance and truths must be equal-length vectors, got "
                f"{mean.shape}, {var.shape}, {y.shape}"
            )
        if mean.size == 0:
            raise ValueError("batch evaluation is empty")
        ids = self.batch_ids
        ids = np.arange(mean.size) if ids is None else np.asarray(ids).reshape(-1)
        if ids.shape != mean.shape:
            raise ValueError("batch_ids must match the batch length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "truths", y)
        object.__setattr__(self, "batch_ids", ids)

    @classmethod
    def from_moments(cls, moments, truths, batch_ids=None):
        return cls(moments.mean, moments.variance, truths, batch_ids)

    @property
    def residuals(self):
        return self.truths - self.mean

    def __len__(self):
        return self.mean.size


@dataclass(frozen=True)
class ConfidenceLevels:
    """Strictly increasing confidence levels and their z-scores."""

    alphas: tuple
    z_scores: tuple = field(init=False)

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if not alphas:
            raise ValueError("at least one confidence level is required")
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise ValueError(f"confidence level {a} outside (0, 1)")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError(f"confidence levels must be strictly increasing: {alphas}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "z_scores", tuple(z_score(a) for a in alphas))

    def __len__(self):
        return len(self.alphas)

    def as_array(self):
        return np.asarray(self.alphas)


@dataclass
class LagrangeState:
    """Multipliers, penalty weight and penalty growth factor."""

    lam: np.ndarray
    beta: float
    r: float
    levels: ConfidenceLevels

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if self.lam.size != len(self.levels):
            raise ValueError(
                f"{self.lam.size} multipliers for {len(self.levels)} confidence levels"
            )
        if not self.beta > 0:
            raise ValueError(f"penalty beta must be positive, got {self.beta}")
        if not self.r > 1:
            raise ValueError(f"growth factor r must exceed 1, got {self.r}")


def mse_loss(ev):
    return float(np.mean(ev.residuals ** 2))


def lool_loss(ev):
    """Leave-one-out negative log-likelihood, summed over the batch, constants dropped."""
    bad = np.flatnonzero(~(ev.variance > 0))
    if bad.size:
        raise ValueError(
            f"non-positive posterior variance at batch id {ev.batch_ids[bad[0]]}"
        )
    return float(np.sum(np.log(ev.variance) + ev.residuals ** 2 / ev.variance))


def coverage(ev, alpha, z=None):
    """Fraction of truths strictly inside ``mean ± z * std``.

    ``alpha`` only documents the level; ``z`` defaults to ``z_score(alpha)``.
    """
    if z is None:
        z = z_score(alpha)
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    half = z * np.sqrt(ev.variance)
    inside = (ev.mean - half < ev.truths) & (ev.truths < ev.mean + half)
    return float(np.count_nonzero(inside)) / len(ev)


def constraint_residual(ev, levels):
    """Coverage minus target at each confidence level."""
    return np.array(
        [coverage(ev, a, z) - a for a, z in zip(levels.alphas, levels.z_scores)]
    )


def augmented_lagrangian(q, residual, state):
    """``q + <lam, residual> + beta/2 * |residual|^2`` using ``state.lam`` and ``state.beta``."""
    residual = np.asarray(residual, dtype=float).reshape(-1)
    lam = np.asarray(state.lam, dtype=float).reshape(-1)
    beta = state.beta
    if residual.shape != lam.shape:
        raise ValueError(
            f"residual has length {residual.size}, multipliers have length {lam.size}"
        )
    return float(q + lam @ residual + 0.5 * beta * (residual @ residual))
