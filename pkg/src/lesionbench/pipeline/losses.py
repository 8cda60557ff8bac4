"""Classification losses on probability vectors, plus score-space gradients.

All functions operate on plain numpy values so they can be checked against
closed-form hand computations; the training loop has its own torch
implementation that is tested for agreement with these.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-12  # probability floor inside log terms

_KINDS = ("cross_entropy", "focal")


def _check_probs(probs: np.ndarray, label: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError(f"probs must be a 1-D class vector, got shape {probs.shape}")
    if not (0 <= label < probs.shape[0]):
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    if probs.min() < -1e-9:
        raise ValueError(f"probabilities must be non-negative, min is {probs.min()}")
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities must sum to 1 within 1e-6, got {probs.sum()}")
    return probs


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """`-log p_t` with the true-class probability floored at EPS."""
    probs = _check_probs(probs, label)
    return float(-np.log(max(float(probs[label]), EPS)))


def focal_loss(probs: np.ndarray, label: int, alpha: float, gamma: float) -> float:
    """`-alpha * (1 - p_t)^gamma * log(p_t)`; reduces to cross-entropy at (1, 0)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    probs = _check_probs(probs, label)
    p_t = max(float(probs[label]), EPS)
    return float(-alpha * (1.0 - p_t) ** gamma * np.log(p_t))


def softmax(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def loss_on_scores(
    scores: np.ndarray,
    label: int,
    kind: str = "cross_entropy",
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> float:
    """Loss evaluated on pre-softmax scores (the training-time quantity)."""
    if kind not in _KINDS:
        raise ValueError(f"loss kind must be one of {_KINDS}, got {kind!r}")
    probs = softmax(scores)
    if kind == "cross_entropy":
        return cross_entropy(probs, label)
    return focal_loss(probs, label, alpha, gamma)


def loss_grad_on_scores(
    scores: np.ndarray,
    label: int,
    kind: str = "cross_entropy",
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> np.ndarray:
    """Analytic d(loss)/d(scores); matches central finite differences.

    With p = softmax(s) and t the true class, dp_t/ds_j = p_t (1[j=t] - p_j),
    so grad_j = dL/dp_t * p_t * (1[j=t] - p_j).  For cross-entropy this
    collapses to the familiar p - onehot(t).
    """
    if kind not in _KINDS:
        raise ValueError(f"loss kind must be one of {_KINDS}, got {kind!r}")
    probs = softmax(scores)
    if not (0 <= label < probs.shape[0]):
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    if kind == "cross_entropy":
        grad = probs.copy()
        grad[label] -= 1.0
        return grad
    p_t = max(float(probs[label]), EPS)
    one_minus = 1.0 - p_t
    # dL/dp_t for L = -alpha (1-p_t)^gamma log(p_t); guard the gamma=0 branch
    # where the modulating term vanishes identically.
    d_dpt = -alpha * one_minus**gamma / p_t
    if gamma > 0.0:
        d_dpt += alpha * gamma * one_minus ** (gamma - 1.0) * np.log(p_t)
    onehot = np.zeros_like(probs)
    onehot[label] = 1.0
    return d_dpt * p_t * (onehot - probs)
