"""Losses returning (scalar, gradient w.r.t. the prediction)."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

_EPS = 1e-7  # probability clamp for log terms


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    with np.errstate(over="ignore"):  # divergence shows up as inf, not a warning
        loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def loss_bce(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy on probabilities (clamped away from 0/1)."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"bce shapes differ: {pred.shape} vs {target.shape}")
    p = np.clip(pred, _EPS, 1.0 - _EPS)
    loss = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))
    grad = ((p - target) / (p * (1.0 - p))) / p.size
    return loss, grad.astype(pred.dtype)


def loss_sparse_ce(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Sparse categorical cross-entropy; integer class targets, log-softmax inside."""
    if logits.ndim != 2:
        raise ShapeMismatch(f"sparse_ce expects (n, classes) logits, got {logits.shape}")
    n = logits.shape[0]
    if target.shape != (n,):
        raise ShapeMismatch(f"sparse_ce targets must be ({n},), got {target.shape}")
    t = np.asarray(target, dtype=np.int64)
    if t.min() < 0 or t.max() >= logits.shape[1]:
        raise ShapeMismatch("sparse_ce target class code out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n), t].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), t] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype)
