"""Composite saliency loss ``alpha*KLD + beta*(1 - CC) + gamma*BCE`` and its gradient.

The per-map terms match :mod:`omnisal.metrics`; a batch loss is the mean of
the per-map losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metrics import EPS


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.25
    gamma: float = 0.25

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError(f"loss weights must be >= 0 and not all zero, got {vals}")


def _check(y, yhat):
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("targets must be min-max normalised to [0, 1]")
    return y, yhat


def _kld_terms(y, yhat):
    s_y, s_q = y.sum(), yhat.sum()
    p = y / s_y
    q = yhat / s_q
    ratio = p / (q + EPS)
    value = np.sum(p * np.log(ratio + EPS))
    g = -p * ratio / ((q + EPS) * (ratio + EPS))  # d value / d q
    grad = (g - np.sum(g * q)) / s_q
    return value, grad


def _cc_terms(y, yhat):
    a = y - y.mean()
    b = yhat - yhat.mean()
    aa, bb = np.sum(a * a), np.sum(b * b)
    if aa <= 0 or bb <= 0:
        return 0.0, np.zeros_like(yhat)
    root = np.sqrt(aa * bb)
    r = np.sum(a * b) / root
    return r, a / root - r * b / bb


def _bce_terms(y, yhat):
    q = np.clip(yhat, EPS, 1.0 - EPS)
    n = y.size
    value = -np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))
    inside = (yhat > EPS) & (yhat < 1.0 - EPS)
    grad = np.where(inside, (q - y) / (q * (1.0 - q)), 0.0) / n
    return value, grad


def map_loss(y, yhat, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """Loss and ``dL/dyhat`` for a single map pair."""
    y, yhat = _check(y, yhat)
    value = 0.0
    grad = np.zeros_like(yhat)
    if w.alpha:
        if y.sum() <= 0:
            raise ValueError("KLD term needs a target with positive mass")
        k, gk = _kld_terms(y, yhat)
        value += w.alpha * k
        grad += w.alpha * gk
    if w.beta:
        r, gr = _cc_terms(y, yhat)
        value += w.beta * (1.0 - r)
        grad -= w.beta * gr
    if w.gamma:
        b, gb = _bce_terms(y, yhat)
        value += w.gamma * b
        grad += w.gamma * gb
    return float(value), grad


def loss(y, yhat, w: LossWeights = LossWeights()) -> float:
    """Composite loss of one map pair, or the mean over a leading batch axis."""
    y = np.asarray(y)
    if y.ndim == 3:
        return float(np.mean([map_loss(a, b, w)[0] for a, b in zip(y, np.asarray(yhat))]))
    return map_loss(y, yhat, w)[0]


def batch_loss(y, yhat, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """Mean loss over a batch ``(N, H, W)`` and its gradient w.r.t. ``yhat``."""
    y = np.asarray(y)
    yhat = np.asarray(yhat)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    n = y.shape[0]
    total = 0.0
    grad = np.empty(yhat.shape, dtype=np.float64)
    for i in range(n):
        v, g = map_loss(y[i], yhat[i], w)
        total += v
        grad[i] = g / n
    return total / n, grad
