"""Synthetic Matérn GP data, train/test splits and CSV dataset files."""

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from covgp.kernel import MaternParams, matern_correlation, pairwise_distances
from covgp.kriging import Dataset

__all__ = [
    "SyntheticSpec",
    "sample_gp",
    "split",
    "load_dataset",
    "save_dataset",
    "load_features",
    "DatasetFormatError",
    "MAX_DENSE_POINTS",
]

MAX_DENSE_POINTS = 20000
_BLOCK_ELEMENTS = 1 << 21


class DatasetFormatError(ValueError):
    """Malformed dataset file."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset.

    ``layout`` is ``"random"`` (uniform draws on the domain) or ``"grid"``
    (a regular grid, only for ``dims == 1``).
    """

    n_points: int
    params: MaternParams
    domain: tuple = (0.0, 1.0)
    dims: int = 1
    seed: int = 0
    layout: str = "random"

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"empty domain [{lo}, {hi}]")
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.layout not in ("random", "grid"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "grid" and self.dims != 1:
            raise ValueError("grid layout is only available for dims == 1")


def _features(spec, rng):
    lo, hi = spec.domain
    if spec.layout == "grid":
        return np.linspace(lo, hi, spec.n_points)[:, None]
    return rng.uniform(lo, hi, size=(spec.n_points, spec.dims))


def _sample_exponential_1d(X, params, rng):
    # nu = 1/2 in one dimension is an Ornstein-Uhlenbeck process: exact Markov recursion
    x = X[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    eps = rng.standard_normal(x.size)
    noise = rng.standard_normal(x.size)
    decay = np.exp(-np.diff(xs) / params.rho)
    f = np.empty(x.size)
    f[0] = eps[0]
    innov = np.sqrt(-np.expm1(-2.0 * np.diff(xs) / params.rho)) * eps[1:]
    for j in range(1, x.size):
        f[j] = decay[j - 1] * f[j - 1] + innov[j - 1]
    y = np.empty(x.size)
    y[order] = math.sqrt(params.gamma2) * (f + math.sqrt(params.tau2) * noise)
    return y


def _lower_covariance(X, params):
    # only the lower triangle is filled: the factorization never reads the rest,
    # and column blocks keep temporaries small next to the n x n matrix
    n = X.shape[0]
    K = np.zeros((n, n), order="F")
    width = max(1, _BLOCK_ELEMENTS // n)
    for j0 in range(0, n, width):
        j1 = min(n, j0 + width)
        D = pairwise_distances(X[j0:], X[j0:j1])
        K[j0:, j0:j1] = params.gamma2 * matern_correlation(D, params.nu, params.rho)
    K[np.diag_indices(n)] = params.prior_variance
    return K


def sample_gp(spec):
    """Draw features and one exact GP realisation of the responses.

    Responses are ``L @ eps`` with ``L`` the Cholesky factor of the full
    covariance (nugget on the diagonal). For ``nu == 0.5`` in one dimension
    the process is Markov and is sampled exactly without the dense factor,
    which lifts the size cap.
    """
    rng = np.random.default_rng(spec.seed)
    X = _features(spec, rng)
    p = spec.params
    if p.nu == 0.5 and spec.dims == 1 and spec.n_points > MAX_DENSE_POINTS:
        return Dataset(X, _sample_exponential_1d(X, p, rng))
    if spec.n_points > MAX_DENSE_POINTS:
        raise ValueError(
            f"dense sampling is limited to {MAX_DENSE_POINTS} points, got {spec.n_points}"
        )
    K = _lower_covariance(X, p)
    try:
        L = scipy.linalg.cholesky(K, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            f"covariance of {spec.n_points} points is not numerically positive "
            f"definite for {p}; use a larger nugget tau2"
        ) from None
    y = L @ rng.standard_normal(spec.n_points)
    return Dataset(X, y)


def split(data, train_fraction, seed):
    """Uniformly random disjoint train/test partition, ``floor(f n)`` rows to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * data.n))
    if n_train < 1 or n_train >= data.n:
        raise ValueError(
            f"split of {data.n} rows at fraction {train_fraction} leaves an empty side"
        )
    perm = np.random.default_rng(seed).permutation(data.n)
    train_ids = np.sort(perm[:n_train])
    test_ids = np.sort(perm[n_train:])
    return data.subset(train_ids), data.subset(test_ids)


def _format(value):
    return repr(float(value))


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(data, path):
    """Write ``f0,...,f{d-1},y`` CSV with round-trip exact decimal values."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{j}" for j in range(data.dim)] + ["y"])
    for row, y in zip(data.features, data.responses):
        writer.writerow([_format(v) for v in row] + [_format(y)])
    _atomic_write(path, buf.getvalue())


def _read_rows(path, expect_response):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_y = bool(header) and header[-1] == "y"
        if expect_response and not has_y:
            raise DatasetFormatError(f"{path}: header must end with column 'y'")
        nfeat = len(header) - (1 if has_y else 0)
        if nfeat < 1 or header[:nfeat] != [f"f{j}" for j in range(nfeat)]:
            raise DatasetFormatError(f"{path}: header must be f0,...,f{{d-1}}[,y]")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    return rows, nfeat, has_y


def load_dataset(path):
    rows, nfeat, _ = _read_rows(path, expect_response=True)
    if not rows:
        raise DatasetFormatError(f"{path}: empty dataset")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :nfeat], arr[:, nfeat])


def load_features(path):
    """Feature matrix from a dataset or features-only CSV (a ``y`` column is ignored).

    An input with a header and no rows yields a ``(0, d)`` array.
    """
    rows, nfeat, _ = _read_rows(path, expect_response=False)
    if not rows:
        return np.empty((0, nfeat))
    return np.asarray(rows, dtype=float)[:, :nfeat]
