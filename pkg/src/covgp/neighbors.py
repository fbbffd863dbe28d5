"""Exact k-nearest-neighbor queries over a fixed training feature matrix."""

import numpy as np
from scipy.spatial import cKDTree

from covgp.kernel import pairwise_distances

__all__ = ["NeighborIndex", "build_index", "query"]

_BRUTE_FORCE_DIM = 20
# relative slack when collecting candidates that may tie with the k-th distance
_TIE_SLACK = 1e-9


class NeighborIndex:
    """Immutable exact k-NN index.

    A k-d tree proposes candidates; the final choice is made on distances
    recomputed with :func:`pairwise_distances`, sorted by ``(distance, id)``
    so ties always resolve towards the lower training id. Above 20 feature
    dimensions the tree is skipped and every query is brute force.
    """

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError(f"need at least 2 training rows, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("training features must be finite")
        self.features = X
        self.features.setflags(write=False)
        self.tree = cKDTree(X) if X.shape[1] <= _BRUTE_FORCE_DIM else None

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def _candidates(self, x, want):
        if self.tree is None:
            return np.arange(self.n)
        count = min(want + 1, self.n)
        dist, ids = self.tree.query(x, k=count)
        dist = np.atleast_1d(dist)
        ids = np.atleast_1d(ids)
        if count <= want:
            return ids
        radius = dist[want - 1]
        if dist[want] > radius * (1 + _TIE_SLACK) + 1e-300:
            return ids[:want]
        # boundary tie: pull in everything that might share the k-th distance
        r = radius * (1 + _TIE_SLACK) + 1e-300
        return np.asarray(self.tree.query_ball_point(x, r), dtype=int)

    def query(self, x, k, exclude=None):
        """Return ``(ids, distances)`` of the ``k`` nearest training rows to ``x``.

        ``exclude`` removes one training id from consideration, which is how
        leave-one-out neighbor sets are formed; duplicates of the excluded
        row remain eligible.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(
                f"query has {x.shape[0]} features, index has {self.dim}"
            )
        limit = self.n - (0 if exclude is None else 1)
        if not 1 <= k <= limit:
            raise ValueError(f"k must be in [1, {limit}], got {k}")
        if exclude is not None and not 0 <= exclude < self.n:
            raise ValueError(f"exclude id {exclude} outside [0, {self.n})")
        want = k + (0 if exclude is None else 1)
        cand = self._candidates(x, want)
        if exclude is not None:
            cand = cand[cand != exclude]
        cand = np.sort(cand)
        dist = pairwise_distances(x[None, :], self.features[cand])[0]
        order = np.lexsort((cand, dist))[:k]
        return cand[order], dist[order]

    def query_many(self, Z, k, exclude=None):
        """Stacked :meth:`query` over rows of ``Z``; returns (m, k) arrays.

        ``exclude`` is either None or a sequence with one id per row.
        """
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None] if self.dim == 1 else Z[None, :]
        if Z.shape[1] != self.dim:
            raise ValueError(f"queries have {Z.shape[1]} features, index has {self.dim}")
        m = Z.shape[0]
        limit = self.n - (0 if exclude is None else 1)
        if not 1 <= k <= limit:
            raise ValueError(f"k must be in [1, {limit}], got {k}")
        ids = np.empty((m, k), dtype=np.intp)
        dist = np.empty((m, k))
        if m == 0:
            return ids, dist
        ex = None if exclude is None else np.asarray(exclude, dtype=np.intp)
        want = k + (0 if ex is None else 1)
        if self.tree is None or want >= self.n:
            slow = np.arange(m)
        else:
            tdist, tids = self.tree.query(Z, k=want + 1)
            tie = tdist[:, want] <= tdist[:, want - 1] * (1 + _TIE_SLACK) + 1e-300
            fast = np.flatnonzero(~tie)
            slow = np.flatnonzero(tie)
            if fast.size:
                cand = tids[fast, :want]
                diff = Z[fast, None, :] - self.features[cand]
                d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
                if ex is not None:
                    d = np.where(cand == ex[fast, None], np.inf, d)
                order = np.lexsort((cand, d), axis=-1)[:, :k]
                ids[fast] = np.take_along_axis(cand, order, axis=1)
                dist[fast] = np.take_along_axis(d, order, axis=1)
        for j in slow:
            ids[j], dist[j] = self.query(
                Z[j], k, exclude=None if ex is None else int(ex[j])
            )
        return ids, dist


def build_index(X):
    return NeighborIndex(X)


def query(index, x, k, exclude=None):
    return index.query(x, k, exclude=exclude)
