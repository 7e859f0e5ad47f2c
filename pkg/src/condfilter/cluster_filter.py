"""Clustering-based conditional filtering.

Target rows are summarized by K-means centers; every source row is scored by
the average or minimum Lp distance to those centers and the rows with the
smallest scores are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._parallel import map_chunks
from ._validation import as_rows, check_positive_int, check_same_dim, check_seed
from .data import ScoredSelection
from .kmeans import ClusterModel, fit_kmeans

# rows per scoring chunk; fixed so per-row arithmetic never depends on worker count
_GEMM_CHUNK = 8192
_L1_BLOCK_ELEMS = 1 << 21


@dataclass(frozen=True)
class ClusterFilterSpec:
    budget: int
    agg: str = "min"
    p: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.agg not in ("avg", "min"):
            raise ValueError(f"agg must be 'avg' or 'min', got {self.agg!r}")
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p!r}")
        check_positive_int(self.budget, "budget")
        check_seed(self.seed)

    @property
    def method(self):
        return f"cluster_{self.agg}"


def _score_l2(X, centers, agg):
    c2 = np.einsum("kd,kd->k", centers, centers)

    def chunk(lo, hi):
        x = X[lo:hi]
        d2 = np.einsum("id,id->i", x, x)[:, None] - 2.0 * (x @ centers.T) + c2[None, :]
        np.maximum(d2, 0.0, out=d2)
        if agg == "min":
            # sqrt is monotone and correctly rounded, so sqrt(min) == min(sqrt)
            return np.sqrt(d2.min(axis=1))
        return np.sqrt(d2).mean(axis=1)

    return chunk


def _score_l1(X, centers, agg):
    k, dim = centers.shape
    block = max(1, _L1_BLOCK_ELEMS // (k * dim))

    def chunk(lo, hi):
        out = []
        for a in range(lo, hi, block):
            d = np.abs(X[a:min(a + block, hi), None, :] - centers[None, :, :]).sum(axis=2)
            out.append(d.min(axis=1) if agg == "min" else d.mean(axis=1))
        return np.concatenate(out)

    return chunk


def score_cluster(source, model, agg="min", p=2, threads=None):
    """Aggregated Lp distance from every source row to the cluster centers."""
    if agg not in ("avg", "min"):
        raise ValueError(f"agg must be 'avg' or 'min', got {agg!r}")
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p!r}")
    X = as_rows(source, name="source")
    centers = np.asarray(model.centers, dtype=np.float64)
    if X.shape[0] == 0:
        return np.zeros(0)
    check_same_dim(X, centers, "source rows")
    fn = _score_l2(X, centers, agg) if p == 2 else _score_l1(X, centers, agg)
    return np.concatenate(map_chunks(fn, X.shape[0], _GEMM_CHUNK, threads))


def filter_cluster(source, target, spec, k=200, max_iters=100, rel_tol=1e-4, n_init="auto",
                   model=None, threads=None):
    """Select ``spec.budget`` source rows closest to the target clusters.

    A precomputed ``model`` skips the K-means fit.
    """
    if model is None:
        model = fit_kmeans(target, k, seed=spec.seed, max_iters=max_iters, rel_tol=rel_tol,
                           n_init=n_init, threads=threads)
    scores = score_cluster(source, model, spec.agg, spec.p, threads)
    info = {"k": model.k, "agg": spec.agg, "p": spec.p, "inertia": model.inertia}
    return ScoredSelection.from_scores(scores, spec.budget, spec.method, spec.seed, "ascending", info)


class ClusterFilter(TransformerMixin, BaseEstimator):
    """Keep the source rows nearest to K-means clusters of the target.

    ``fit`` takes the target rows; ``transform`` takes source rows and returns
    the selected ones (in source order). The full selection, with scores, is
    available from :meth:`select`.

    Parameters
    ----------
    budget : int
        Number of source rows to keep.
    n_clusters : int, default=200
    agg : {"min", "avg"}, default="min"
    p : {1, 2}, default=2
        Norm used for source-to-center distances. Clustering itself is L2.
    max_iter, tol, n_init :
        Forwarded to K-means.
    random_state : int, default=0
    n_jobs : int or None
    """

    def __init__(self, budget, n_clusters=200, agg="min", p=2, max_iter=100, tol=1e-4,
                 n_init="auto", random_state=0, n_jobs=None):
        self.budget = budget
        self.n_clusters = n_clusters
        self.agg = agg
        self.p = p
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _spec(self):
        return ClusterFilterSpec(self.budget, self.agg, self.p, self.random_state)

    def fit(self, X, y=None):
        self._spec()
        self.model_ = fit_kmeans(X, self.n_clusters, seed=self.random_state, max_iters=self.max_iter,
                                 rel_tol=self.tol, n_init=self.n_init, threads=self.n_jobs)
        self.n_features_in_ = self.model_.dim
        return self

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return score_cluster(X, self.model_, self.agg, self.p, self.n_jobs)

    def select(self, X):
        check_is_fitted(self, "model_")
        return filter_cluster(X, None, self._spec(), model=self.model_, threads=self.n_jobs)

    def transform(self, X):
        sel = self.select(X)
        return as_rows(X)[sel.selected]


__all__ = ["ClusterFilter", "ClusterFilterSpec", "ClusterModel", "filter_cluster", "score_cluster"]
