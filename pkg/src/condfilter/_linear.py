"""Losses, gradients and full-batch gradient descent for the linear scorers."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp

STD_FLOOR = 1e-8


def standardization(X):
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), STD_FLOOR)
    return mean, scale


def logistic_loss_grad(w, b, X, y):
    """Mean binary cross-entropy and its gradient w.r.t. ``(w, b)``."""
    z = X @ w + b
    # -[y log s(z) + (1-y) log s(-z)], evaluated without overflow
    loss = -np.mean(y * log_expit(z) + (1.0 - y) * log_expit(-z))
    r = (expit(z) - y) / X.shape[0]
    return loss, X.T @ r, r.sum()


def softmax_loss_grad(W, b, X, y):
    """Mean multinomial cross-entropy and gradient w.r.t. ``(W, b)``.

    ``W`` has shape ``(classes, dim)``.
    """
    n = X.shape[0]
    logits = X @ W.T + b
    lse = logsumexp(logits, axis=1)
    loss = np.mean(lse - logits[np.arange(n), y])
    P = np.exp(logits - lse[:, None])
    P[np.arange(n), y] -= 1.0
    P /= n
    return loss, P.T @ X, P.sum(axis=0)


def softmax(logits):
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
