"""Deterministic K-means (k-means++ seeding, Lloyd refinement).

Used to summarize target representations into ``k`` centers that the
clustering filter scores source rows against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._parallel import map_chunks
from ._validation import as_rows, check_positive_int, check_same_dim, check_seed
from .data import EmbeddingSet

# element budget for one (rows, k, dim) difference block
_BLOCK_ELEMS = 1 << 21
_AUTO_RESTART_WORK = 1 << 20


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centers: np.ndarray
    inertia: float
    iterations_run: int
    inertia_history: list = field(default_factory=list)

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def to_embeddings(self):
        return EmbeddingSet(self.centers.astype(np.float32))


def _rows_per_block(k, dim):
    return max(1, _BLOCK_ELEMS // max(1, k * dim))


def _nearest(X, centers, threads=None):
    """Nearest center (ties to the lower index) and squared L2 distance."""
    n = X.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    def block(lo, hi):
        diff = X[lo:hi, None, :] - centers[None, :, :]
        d2 = np.einsum("ikd,ikd->ik", diff, diff)
        lab = np.argmin(d2, axis=1)
        return lab, d2[np.arange(hi - lo), lab]

    parts = map_chunks(block, n, _rows_per_block(*centers.shape), threads)
    labels = np.concatenate([p[0] for p in parts])
    dist = np.concatenate([p[1] for p in parts])
    return labels, dist


def _kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            cum = np.cumsum(closest)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            # guard against landing on a zero-weight row through rounding
            while closest[idx] == 0:
                idx -= 1
        else:
            # every row coincides with a chosen center
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(remaining.shape[0])])
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def _update_centers(X, labels, dist, k, threads=None):
    n, dim = X.shape
    chunk = 4096

    def partial(lo, hi):
        sums = np.zeros((k, dim))
        np.add.at(sums, labels[lo:hi], X[lo:hi])
        counts = np.bincount(labels[lo:hi], minlength=k)
        return sums, counts

    sums = np.zeros((k, dim))
    counts = np.zeros(k, dtype=np.int64)
    for s, c in map_chunks(partial, n, chunk, threads):
        sums += s
        counts += c
    centers = np.empty((k, dim))
    nonempty = counts > 0
    centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    empty = np.flatnonzero(~nonempty)
    if empty.size:
        # reseed each emptied cluster at the row currently farthest from its center
        far = dist.copy()
        for j in empty:
            i = int(np.argmax(far))
            centers[j] = X[i]
            far[i] = -1.0
    return centers


def lloyd(X, centers, max_iters, rel_tol, threads=None):
    """Lloyd iterations from ``centers``; returns centers, labels, inertia history, iterations."""
    k = centers.shape[0]
    labels, dist = _nearest(X, centers, threads)
    history = [float(dist.sum())]
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        new_centers = _update_centers(X, labels, dist, k, threads)
        new_labels, new_dist = _nearest(X, new_centers, threads)
        prev = history[-1]
        cur = float(new_dist.sum())
        centers, dist = new_centers, new_dist
        history.append(cur)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable or prev == 0.0 or (prev - cur) < rel_tol * prev:
            break
    return centers, labels, history, n_iter


def _auto_n_init(n, k, dim):
    return 10 if n * k * dim <= _AUTO_RESTART_WORK else 1


def fit_kmeans(target, k, seed=0, max_iters=100, rel_tol=1e-4, n_init="auto", threads=None):
    """Fit K-means on target rows and return a :class:`ClusterModel`.

    The run with the lowest inertia wins (earliest run on ties); run ``r`` is
    seeded from ``(seed, r)``. ``n_init="auto"`` restarts 10 times on small
    problems, where single runs stall in local minima most often, and once
    otherwise.
    """
    X = as_rows(target, name="target")
    k = check_positive_int(k, "k")
    seed = check_seed(seed)
    max_iters = check_positive_int(max_iters, "max_iters")
    if n_init == "auto":
        n_init = _auto_n_init(X.shape[0], k, X.shape[1])
    n_init = check_positive_int(n_init, "n_init")
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    if X.shape[0] == 0:
        raise ValueError("target must contain at least one row")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds the number of target rows ({X.shape[0]})")
    best = None
    for run in range(n_init):
        rng = np.random.default_rng([seed, run])
        init = _kmeans_plusplus(X, k, rng)
        centers, _, history, n_iter = lloyd(X, init, max_iters, rel_tol, threads)
        if best is None or history[-1] < best.inertia:
            best = ClusterModel(centers, history[-1], n_iter, history)
    return best


def assign(model, rows, threads=None):
    X = as_rows(rows, name="rows")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    check_same_dim(X, model.centers)
    return _nearest(X, model.centers, threads)[0]


class KMeans(ClusterMixin, BaseEstimator):
    """K-means estimator with a fixed, seed-determined result.

    Parameters
    ----------
    n_clusters : int, default=200
    max_iter : int, default=100
    tol : float, default=1e-4
        Stop once the relative inertia improvement falls below ``tol``.
    n_init : int or "auto", default="auto"
    random_state : int, default=0
    n_jobs : int or None
        Worker ceiling. Results do not depend on it.
    """

    def __init__(self, n_clusters=200, max_iter=100, tol=1e-4, n_init="auto", random_state=0, n_jobs=None):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        model = fit_kmeans(
            X,
            self.n_clusters,
            seed=self.random_state,
            max_iters=self.max_iter,
            rel_tol=self.tol,
            n_init=self.n_init,
            threads=self.n_jobs,
        )
        self.model_ = model
        self.cluster_centers_ = model.centers
        self.inertia_ = model.inertia
        self.n_iter_ = model.iterations_run
        self.labels_ = assign(model, X, self.n_jobs)
        self.n_features_in_ = model.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return assign(self.model_, X, self.n_jobs)

    def transform(self, X):
        """Euclidean distance from each row to every center."""
        check_is_fitted(self, "model_")
        X = as_rows(X)
        check_same_dim(X, self.cluster_centers_)
        diff = X[:, None, :] - self.cluster_centers_[None, :, :]
        return np.sqrt(np.einsum("ikd,ikd->ik", diff, diff))
