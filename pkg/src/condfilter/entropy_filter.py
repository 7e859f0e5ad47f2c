"""Entropy ranking of source rows under a classifier trained on the labeled target.

``active`` keeps the most uncertain source rows, ``inverse`` the most
confident ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._linear import softmax, softmax_loss_grad, standardization
from ._parallel import map_chunks
from ._validation import as_rows, check_positive_int, check_same_dim, labels_of
from .data import ScoredSelection
from .domain_filter import DomainTrainConfig

PROB_FLOOR = 1e-12
MODES = {"active": ("entropy_active", "descending"), "inverse": ("entropy_inverse", "ascending")}


@dataclass(eq=False)
class SoftmaxClassifier:
    weights: np.ndarray  # (classes, dim)
    biases: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list = field(default_factory=list)

    @property
    def classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, classes, dim):
        return cls(np.zeros((classes, dim)), np.zeros(classes), np.zeros(dim), np.ones(dim))

    def predict_proba(self, X):
        X = as_rows(X)
        check_same_dim(X, self.weights)
        return softmax(((X - self.mean) / self.scale) @ self.weights.T + self.biases)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def to_text(self):
        doc = {
            "kind": "softmax",
            "classes": self.classes,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        return cls(np.array(doc["weights"]), np.array(doc["biases"]), np.array(doc["mean"]), np.array(doc["scale"]))

    def save(self, path):
        Path(path).write_text(self.to_text())


def train_target_classifier(target, cfg=DomainTrainConfig(), y=None):
    """Multinomial logistic regression on the labeled target rows (full-batch GD).

    Labels must be dense class ids ``0..C-1`` with at least two rows each.
    """
    X = as_rows(target, name="target")
    labels = labels_of(target, y, name="target labels")
    if labels.shape[0] != X.shape[0]:
        raise ValueError("labels and rows differ in length")
    counts = np.bincount(labels) if labels.size and labels.min() >= 0 else None
    if counts is None or (counts == 0).any():
        raise ValueError("class ids must be dense integers 0..C-1")
    if counts.shape[0] < 2:
        raise ValueError("need at least two classes")
    if (counts < 2).any():
        raise ValueError(f"every class needs >= 2 rows, got counts {counts.tolist()}")
    mean, scale = standardization(X)
    Z = (X - mean) / scale
    W = np.zeros((counts.shape[0], X.shape[1]))
    b = np.zeros(counts.shape[0])
    loss, gW, gb = softmax_loss_grad(W, b, Z, labels)
    history = [loss]
    for _ in range(cfg.epochs):
        W = W - cfg.learning_rate * gW
        b = b - cfg.learning_rate * gb
        loss, gW, gb = softmax_loss_grad(W, b, Z, labels)
        history.append(loss)
    return SoftmaxClassifier(W, b, mean, scale, history)


def entropy_of(probs):
    """Natural-log Shannon entropy of each row of ``probs``."""
    p = np.maximum(np.asarray(probs, dtype=np.float64), PROB_FLOOR)
    h = -np.sum(np.asarray(probs) * np.log(p), axis=1)
    return np.maximum(h, 0.0)


def score_entropy(classifier, source, threads=None):
    X = as_rows(source, name="source")
    if X.shape[0] == 0:
        return np.zeros(0)
    check_same_dim(X, classifier.weights, "source rows")
    parts = map_chunks(lambda lo, hi: entropy_of(classifier.predict_proba(X[lo:hi])), X.shape[0], 8192, threads)
    return np.concatenate(parts)


def filter_entropy(source, target, cfg=DomainTrainConfig(), budget=1, mode="active", y=None,
                   classifier=None, threads=None):
    if mode not in MODES:
        raise ValueError(f"mode must be 'active' or 'inverse', got {mode!r}")
    check_positive_int(budget, "budget")
    if classifier is None:
        classifier = train_target_classifier(target, cfg, y)
    scores = score_entropy(classifier, source, threads)
    method, order = MODES[mode]
    info = {"classes": classifier.classes, "max_entropy": math.log(classifier.classes)}
    return ScoredSelection.from_scores(scores, budget, method, cfg.seed, order, info)


class EntropyFilter(TransformerMixin, BaseEstimator):
    """Rank source rows by predictive entropy of a target-trained classifier.

    ``fit(X, y)`` trains on labeled target rows; ``transform`` returns the
    selected rows of a source array.
    """

    def __init__(self, budget, mode="active", epochs=500, learning_rate=0.1, random_state=0, n_jobs=None):
        self.budget = budget
        self.mode = mode
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cfg = DomainTrainConfig(epochs=self.epochs, learning_rate=self.learning_rate, seed=self.random_state)
        self.classifier_ = train_target_classifier(X, cfg, y)
        self.n_features_in_ = self.classifier_.dim
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_")
        return self.classifier_.predict_proba(X)

    def score_samples(self, X):
        check_is_fitted(self, "classifier_")
        return score_entropy(self.classifier_, X, self.n_jobs)

    def select(self, X):
        check_is_fitted(self, "classifier_")
        cfg = DomainTrainConfig(epochs=self.epochs, learning_rate=self.learning_rate, seed=self.random_state)
        return filter_entropy(X, None, cfg, self.budget, self.mode, classifier=self.classifier_,
                              threads=self.n_jobs)

    def transform(self, X):
        return as_rows(X)[self.select(X).selected]
