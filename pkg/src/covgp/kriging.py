"""Dense and nearest-neighbor (local) kriging.

All posteriors use a zero prior mean. The nugget is treated as
per-observation noise: it sits on the diagonal of training self-covariances
and in the prior variance of the predicted response, never in
cross-covariances, so duplicated feature rows remain well posed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from covgp.kernel import matern_correlation, pairwise_distances

__all__ = [
    "Dataset",
    "PosteriorMoments",
    "KrigingError",
    "BatchTensors",
    "dense_posterior",
    "loocv_posterior",
    "predict",
    "local_moments",
]

_JITTER_START = 1e-10
_JITTER_GROWTH = 10.0
_JITTER_RETRIES = 3
_NEG_VARIANCE_TOL = 1e-10
_PREDICT_ELEMENTS = 1 << 23


class KrigingError(ArithmeticError):
    """Raised when a kriging solve is numerically unusable."""


@dataclass(frozen=True)
class Dataset:
    """Training or test data: ``features`` (n×d) and scalar ``responses`` (n,)."""

    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"{X.shape[0]} feature rows but {y.shape[0]} responses"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, ids):
        ids = np.asarray(ids, dtype=np.intp)
        return Dataset(self.features[ids], self.responses[ids])

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.features, other.features) and np.array_equal(
            self.responses, other.responses
        )


@dataclass(frozen=True)
class PosteriorMoments:
    """Posterior means and variances, one entry per predicted point."""

    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self):
        return np.sqrt(self.variance)

    def __len__(self):
        return np.size(self.mean)


def _cholesky(K, gamma2):
    """Lower Cholesky factor with jitter escalation on failure."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(K.shape[-1])
    jitter = _JITTER_START * gamma2
    for _ in range(_JITTER_RETRIES):
        try:
            return np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= _JITTER_GROWTH
    eig = np.linalg.eigvalsh(K)
    raise KrigingError(
        f"covariance not positive definite after jitter {jitter / _JITTER_GROWTH:.1e}; "
        f"eigenvalues in [{eig[0]:.3e}, {eig[-1]:.3e}]"
    )


def _cholesky_stack(K, params):
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        pass
    L = np.empty_like(K)
    for j in range(K.shape[0]):
        try:
            L[j] = _cholesky(K[j], params.gamma2)
        except KrigingError as exc:
            raise KrigingError(f"{exc} (neighborhood {j}, params {params})") from None
    return L


def _finish_variance(var, params):
    tol = _NEG_VARIANCE_TOL * params.gamma2
    if np.any(var < -tol):
        worst = float(var.min())
        raise KrigingError(f"posterior variance {worst:.3e} < 0 for params {params}")
    return np.maximum(var, 0.0)


def local_moments(Dnn, Dcross, Ynn, params):
    """Kriging of m points, each from its own k conditioning points.

    Parameters
    ----------
    Dnn : ndarray, shape (m, k, k)
        Distances among each point's neighbors.
    Dcross : ndarray, shape (m, k)
        Distances from each point to its neighbors.
    Ynn : ndarray, shape (m, k)
        Neighbor responses.
    params : MaternParams

    Returns
    -------
    PosteriorMoments
    """
    m, k = Dcross.shape
    iu, ju = np.triu_indices(k, 1)
    upper = Dnn[:, iu, ju]
    corr = matern_correlation(
        np.concatenate([upper.ravel(), Dcross.ravel()]), params.nu, params.rho
    )
    ntri = upper.size
    K = np.empty((m, k, k))
    K[:, iu, ju] = corr[:ntri].reshape(m, -1)
    K[:, ju, iu] = K[:, iu, ju]
    K[:, np.arange(k), np.arange(k)] = 1.0 + params.tau2
    K *= params.gamma2
    kx = params.gamma2 * corr[ntri:].reshape(m, k)

    L = _cholesky_stack(K, params)
    sol = np.linalg.solve(L, np.stack([kx, Ynn], axis=-1))
    v = sol[..., 0]
    mean = np.einsum("ij,ij->i", v, sol[..., 1])
    var = params.prior_variance - np.einsum("ij,ij->i", v, v)
    return PosteriorMoments(mean, _finish_variance(var, params))


def _neighbor_tensors(X, nn, query_dist):
    """Distances among each row's neighbors, plus the query distances as given."""
    Xn = X[nn]
    diff = Xn[:, :, None, :] - Xn[:, None, :, :]
    Dnn = np.sqrt(np.einsum("ijkl,ijkl->ijk", diff, diff))
    return Dnn, query_dist


def dense_posterior(Z, train, params):
    """Posterior of the responses at ``Z`` conditioned on the whole training set."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None] if train.dim == 1 else Z[None, :]
    if Z.shape[1] != train.dim:
        raise ValueError(f"Z has {Z.shape[1]} features, training data has {train.dim}")
    X = train.features
    K = params.gamma2 * matern_correlation(pairwise_distances(X, X), params.nu, params.rho)
    K[np.diag_indices_from(K)] = params.prior_variance
    Kzx = params.gamma2 * matern_correlation(
        pairwise_distances(Z, X), params.nu, params.rho
    )
    try:
        L = _cholesky(K, params.gamma2)
    except KrigingError as exc:
        raise KrigingError(f"{exc} (params {params})") from None
    V = scipy.linalg.solve_triangular(L, Kzx.T, lower=True)
    w = scipy.linalg.solve_triangular(L, train.responses, lower=True)
    mean = V.T @ w
    var = params.prior_variance - np.einsum("ij,ij->j", V, V)
    return PosteriorMoments(mean, _finish_variance(var, params))


def loocv_posterior(i, train, index, k, params):
    """Leave-one-out posterior of training point(s) ``i`` from k neighbors.

    ``i`` may be an int or a sequence of ids; the neighbor set of each
    point excludes the point itself.
    """
    ids = np.atleast_1d(np.asarray(i, dtype=np.intp))
    moments = BatchTensors(train, index, ids, k).moments(params)
    if np.ndim(i) == 0:
        return PosteriorMoments(moments.mean[0], moments.variance[0])
    return moments


def predict(Z, train, index, k, params):
    """Local-kriging posterior at each row of ``Z`` from its k nearest training points."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None] if train.dim == 1 else Z[None, :]
    if Z.shape[1] != train.dim:
        raise ValueError(f"Z has {Z.shape[1]} features, training data has {train.dim}")
    if Z.shape[0] == 0:
        return PosteriorMoments(np.empty(0), np.empty(0))
    step = max(1, _PREDICT_ELEMENTS // (k * k * train.dim))
    means, variances = [], []
    for start in range(0, Z.shape[0], step):
        nn, dist = index.query_many(Z[start:start + step], k)
        Dnn, Dcross = _neighbor_tensors(train.features, nn, dist)
        part = local_moments(Dnn, Dcross, train.responses[nn], params)
        means.append(part.mean)
        variances.append(part.variance)
    return PosteriorMoments(np.concatenate(means), np.concatenate(variances))


class BatchTensors:
    """Neighbor sets and distances for a fixed leave-one-out batch.

    Neighborhoods depend only on features, so they are queried once and
    reused for every hyperparameter value evaluated during training.
    """

    def __init__(self, train, index, batch, k):
        batch = np.asarray(batch, dtype=np.intp).reshape(-1)
        if batch.size == 0:
            raise ValueError("batch must be non-empty")
        if not 1 <= k <= train.n - 1:
            raise ValueError(f"k must be in [1, {train.n - 1}], got {k}")
        self.batch = batch
        self.k = k
        nn, dist = index.query_many(train.features[batch], k, exclude=batch)
        self.neighbors = nn
        self.Dnn, self.Dcross = _neighbor_tensors(train.features, nn, dist)
        self.Ynn = train.responses[nn]
        self.truths = train.responses[batch]

    def moments(self, params):
        return local_moments(self.Dnn, self.Dcross, self.Ynn, params)
