"""Matérn covariance function and covariance-matrix assembly."""

import math
from dataclasses import dataclass, replace

import numpy as np

from covgp.special import kv

__all__ = [
    "MaternParams",
    "pairwise_distances",
    "matern",
    "matern_correlation",
    "covariance_matrix",
]

_BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class MaternParams:
    """Hyperparameters of the isotropic Matérn kernel.

    Parameters
    ----------
    nu : float
        Smoothness, > 0.
    rho : float
        Length-scale, > 0, in the units of feature distances.
    gamma2 : float
        Variance scale, > 0.
    tau2 : float
        Nugget, >= 0. It is scaled by ``gamma2``.
    """

    nu: float
    rho: float
    gamma2: float = 1.0
    tau2: float = 0.0

    def __post_init__(self):
        for name in ("nu", "rho", "gamma2", "tau2"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.nu <= 0 or self.rho <= 0 or self.gamma2 <= 0:
            raise ValueError(
                f"nu, rho and gamma2 must be positive, got nu={self.nu}, "
                f"rho={self.rho}, gamma2={self.gamma2}"
            )
        if self.tau2 < 0:
            raise ValueError(f"tau2 must be non-negative, got {self.tau2}")

    @property
    def prior_variance(self):
        return self.gamma2 * (1.0 + self.tau2)

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {"nu": self.nu, "rho": self.rho, "gamma2": self.gamma2, "tau2": self.tau2}


def _as_features(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D feature matrix, got shape {A.shape}")
    return A


def pairwise_distances(A, B):
    """Euclidean distances between the rows of ``A`` (n×d) and ``B`` (m×d).

    Differences are formed explicitly rather than through the expanded
    ``|a|^2 - 2ab + |b|^2`` form, which loses accuracy for close points.
    """
    A = _as_features(A, "A")
    B = _as_features(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"feature dimension mismatch: A has shape {A.shape}, B has shape {B.shape}"
        )
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("features must be finite")
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _BLOCK_ELEMENTS // max(1, B.shape[0] * A.shape[1]))
    for start in range(0, A.shape[0], step):
        diff = A[start:start + step, None, :] - B[None, :, :]
        out[start:start + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def matern_correlation(d, nu, rho):
    """Smooth part of the Matérn kernel: 1 at d = 0, no nugget, no variance."""
    d = np.asarray(d, dtype=float)
    out = np.ones(d.shape)
    pos = d > 0
    if not pos.any():
        return out
    if nu == 0.5:
        # exponential kernel: exact and much cheaper than the Bessel route
        out[pos] = np.exp(-d[pos] / rho)
        return out
    x = math.sqrt(2.0 * nu) * d[pos] / rho
    k = kv(nu, x)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        logscale = (1.0 - nu) * math.log(2.0) - math.lgamma(nu)
        val = np.exp(logscale + nu * np.log(x)) * k
    # K_nu overflows only at x where the correlation has already reached 1
    val = np.where(np.isfinite(k), val, 1.0)
    out[pos] = np.clip(val, 0.0, 1.0)
    return out


def matern(d, params):
    """Matérn covariance at distance(s) ``d``.

    ``gamma2 * (1 + tau2)`` at ``d == 0`` (the nugget indicator fires there),
    ``gamma2 * corr(d)`` otherwise. Returns a float for scalar input.
    """
    arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("distances must be finite and non-negative")
    out = params.gamma2 * matern_correlation(arr, params.nu, params.rho)
    out = np.where(arr == 0, params.prior_variance, out)
    if np.ndim(d) == 0:
        return float(out)
    return out


def covariance_matrix(A, B, params):
    """Kernel matrix between feature sets.

    When ``B is None`` or ``B is A`` the self-covariance is returned: the
    nugget sits on the diagonal only, so duplicated rows stay distinct
    observations. Otherwise the kernel is applied elementwise to the
    pairwise distances.
    """
    if B is None or B is A:
        D = pairwise_distances(A, A)
        K = params.gamma2 * matern_correlation(D, params.nu, params.rho)
        K[np.diag_indices_from(K)] = params.prior_variance
        return K
    return matern(pairwise_distances(A, B), params)
