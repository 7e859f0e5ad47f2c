"""Domain-classifier conditional filtering.

A logistic model learns to tell a random sample of source rows (label 0)
from the target rows (label 1). Its target probability scores every source
row and the highest-scoring rows are kept.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._linear import logistic_loss_grad, standardization
from ._parallel import map_chunks
from ._validation import as_rows, check_positive_int, check_same_dim, check_seed
from .data import ScoredSelection


class AccuracyBandWarning(UserWarning):
    """Training finished without the validation accuracy entering the target band."""


@dataclass(frozen=True)
class DomainTrainConfig:
    epochs: int = 500
    learning_rate: float = 0.1
    val_fraction: float = 0.2
    accuracy_band: tuple = (0.92, 0.95)
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        lo, hi = self.accuracy_band
        if not 0 < lo < hi < 1:
            raise ValueError(f"accuracy_band must satisfy 0 < lower < upper < 1, got {self.accuracy_band}")
        check_seed(self.seed)


@dataclass(eq=False)
class LinearClassifier:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    @property
    def dim(self):
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros(dim), 0.0, np.zeros(dim), np.ones(dim))

    def decision_function(self, X):
        X = as_rows(X)
        check_same_dim(X, self.weights.reshape(1, -1))
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def to_text(self):
        doc = {
            "kind": "logistic",
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }
        # json writes floats with repr, which round-trips exactly
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        return cls(np.array(doc["weights"]), float(doc["bias"]), np.array(doc["mean"]), np.array(doc["scale"]))

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


@dataclass(eq=False)
class DomainDataset:
    rows: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray
    clamped: bool = False

    @property
    def m(self):
        return self.rows.shape[0] // 2


@dataclass
class TrainResult:
    val_accuracy: float
    epochs_run: int
    in_band: bool
    loss_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)


def build_domain_dataset(source, target, seed=0):
    """Balanced two-domain training set: M sampled source rows then M target rows."""
    S = as_rows(source, name="source")
    T = as_rows(target, name="target")
    check_same_dim(S, T, "source rows")
    if S.shape[0] == 0 or T.shape[0] == 0:
        raise ValueError("source and target must be nonempty")
    m = min(S.shape[0], T.shape[0])
    rng = np.random.default_rng(check_seed(seed))
    picked = np.sort(rng.choice(S.shape[0], size=m, replace=False))
    rows = np.vstack([S[picked], T[:m]])
    labels = np.concatenate([np.zeros(m), np.ones(m)])
    return DomainDataset(rows, labels, picked, clamped=T.shape[0] > S.shape[0])


def _stratified_split(labels, val_fraction, rng):
    train, val = [], []
    for value in (0.0, 1.0):
        idx = np.flatnonzero(labels == value)
        idx = idx[rng.permutation(idx.shape[0])]
        n_val = int(round(val_fraction * idx.shape[0]))
        if n_val < 1 or n_val >= idx.shape[0]:
            raise ValueError(
                f"val_fraction={val_fraction} leaves an empty split for label {int(value)} "
                f"({idx.shape[0]} rows)"
            )
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def train_domain_classifier(data, cfg=DomainTrainConfig(), warn=True):
    """Fit logistic regression by full-batch gradient descent.

    Training stops after the first epoch whose held-out accuracy falls inside
    ``cfg.accuracy_band``. Otherwise all epochs run and, if ``warn``, an
    :class:`AccuracyBandWarning` is emitted.
    """
    X, y = data.rows, data.labels
    if X.shape[0] == 0:
        raise ValueError("domain dataset is empty")
    rng = np.random.default_rng([check_seed(cfg.seed), 1])
    tr, va = _stratified_split(y, cfg.val_fraction, rng)
    mean, scale = standardization(X)
    Z = (X - mean) / scale
    Ztr, ytr, Zva, yva = Z[tr], y[tr], Z[va], y[va]

    w = np.zeros(X.shape[1])
    b = 0.0
    lo, hi = cfg.accuracy_band
    loss, gw, gb = logistic_loss_grad(w, b, Ztr, ytr)
    losses = [loss]
    accs = []
    in_band = False
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        w = w - cfg.learning_rate * gw
        b = b - cfg.learning_rate * gb
        loss, gw, gb = logistic_loss_grad(w, b, Ztr, ytr)
        losses.append(loss)
        acc = float(np.mean(((Zva @ w + b) > 0) == (yva == 1)))
        accs.append(acc)
        if lo <= acc <= hi:
            in_band = True
            break
    if warn and not in_band:
        warnings.warn(
            f"validation accuracy {accs[-1]:.4f} outside band {cfg.accuracy_band} after {epoch} epochs",
            AccuracyBandWarning,
            stacklevel=2,
        )
    clf = LinearClassifier(w, float(b), mean, scale)
    return clf, TrainResult(accs[-1], epoch, in_band, losses, accs)


def score_domain(classifier, source, threads=None):
    """Target-domain probability for every source row."""
    X = as_rows(source, name="source")
    if X.shape[0] == 0:
        return np.zeros(0)
    check_same_dim(X, classifier.weights.reshape(1, -1), "source rows")
    parts = map_chunks(lambda lo, hi: expit(classifier.decision_function(X[lo:hi])), X.shape[0], 8192, threads)
    return np.concatenate(parts)


def filter_domain(source, target, cfg=DomainTrainConfig(), budget=1, threads=None):
    check_positive_int(budget, "budget")
    data = build_domain_dataset(source, target, cfg.seed)
    clf, result = train_domain_classifier(data, cfg, warn=False)
    notes = [] if result.in_band else ["accuracy_out_of_band"]
    if data.clamped:
        notes.append("domain_sample_clamped")
    scores = score_domain(clf, source, threads)
    info = {
        "val_accuracy": result.val_accuracy,
        "epochs_run": result.epochs_run,
        "domain_rows_per_label": data.m,
        "warnings": notes,
    }
    return ScoredSelection.from_scores(scores, budget, "domain", cfg.seed, "descending", info)


class DomainClassifierFilter(TransformerMixin, BaseEstimator):
    """Keep the source rows a source-vs-target classifier deems most target-like.

    ``fit(X, target)`` trains on a balanced sample of ``X`` (source) and
    ``target``; ``transform`` returns the selected rows of its input.
    """

    def __init__(self, budget, epochs=500, learning_rate=0.1, val_fraction=0.2,
                 accuracy_band=(0.92, 0.95), random_state=0, n_jobs=None):
        self.budget = budget
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.val_fraction = val_fraction
        self.accuracy_band = accuracy_band
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        return DomainTrainConfig(self.epochs, self.learning_rate, self.val_fraction,
                                 tuple(self.accuracy_band), self.random_state)

    def fit(self, X, target):
        data = build_domain_dataset(X, target, self.random_state)
        self.classifier_, self.train_result_ = train_domain_classifier(data, self._config())
        self.n_features_in_ = self.classifier_.dim
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_")
        p = score_domain(self.classifier_, X, self.n_jobs)
        return np.column_stack([1.0 - p, p])

    def score_samples(self, X):
        check_is_fitted(self, "classifier_")
        return score_domain(self.classifier_, X, self.n_jobs)

    def select(self, X):
        scores = self.score_samples(X)
        check_positive_int(self.budget, "budget")
        return ScoredSelection.from_scores(scores, self.budget, "domain", self.random_state, "descending",
                                           {"val_accuracy": self.train_result_.val_accuracy})

    def transform(self, X):
        return as_rows(X)[self.select(X).selected]

    def fit_transform(self, X, target):
        return self.fit(X, target).transform(X)
