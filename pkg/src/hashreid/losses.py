"""Training losses. Every function returns (value, gradient) as a pair.

All losses are means over the batch, so their scale does not depend on
batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError


def batch_hard_triplet(
    hash_values: np.ndarray, labels: np.ndarray, margin: float
) -> tuple[float, np.ndarray]:
    """Hinge loss over the hardest positive and negative per anchor.

    For each row the positive is the farthest same-label row (excluding the
    anchor itself) and the negative is the nearest other-label row, both in
    Euclidean distance. Returns the mean hinge value and its gradient with
    respect to hash_values.
    """
    h = np.asarray(hash_values, dtype=np.float64)
    labels = np.asarray(labels)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValidationError(f"need a 2-d batch of at least 2 rows, got {h.shape}")
    if labels.shape != (h.shape[0],):
        raise ShapeError(f"labels must have shape ({h.shape[0]},), got {labels.shape}")
    if not margin > 0:
        raise ValidationError("margin must be positive")
    n = h.shape[0]
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    if not pos_mask.any(axis=1).all():
        bad = labels[~pos_mask.any(axis=1)][0]
        raise ValidationError(f"label {bad} has a single row in the batch")
    if not neg_mask.any(axis=1).all():
        raise ValidationError("batch holds a single identity, no negatives exist")
    diff = h[:, None, :] - h[None, :, :]
    dist = np.sqrt(np.maximum((diff * diff).sum(axis=2), 0.0))
    pos_idx = np.argmax(np.where(pos_mask, dist, -np.inf), axis=1)
    neg_idx = np.argmin(np.where(neg_mask, dist, np.inf), axis=1)
    anchors = np.arange(n)
    terms = margin + dist[anchors, pos_idx] - dist[anchors, neg_idx]
    loss = float(np.maximum(terms, 0.0).mean())
    grad = np.zeros_like(h)
    for a in range(n):
        if terms[a] <= 0.0:
            continue
        p, g = pos_idx[a], neg_idx[a]
        if dist[a, p] > 0.0:
            unit = (h[a] - h[p]) / dist[a, p]
            grad[a] += unit / n
            grad[p] -= unit / n
        if dist[a, g] > 0.0:
            unit = (h[a] - h[g]) / dist[a, g]
            grad[a] -= unit / n
            grad[g] += unit / n
    return loss, grad


def identity_loss(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over identity classes, overflow-safe."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2:
        raise ValidationError(f"logits must be 2-d, got shape {z.shape}")
    n, c = z.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValidationError(f"labels must lie in [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float((log_norm - shifted[rows, labels]).mean())
    probs = np.exp(shifted - log_norm[:, None])
    probs[rows, labels] -= 1.0
    return loss, probs / n


def quant_coupling(
    hash_values: np.ndarray, codes: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared distance between continuous values and their codes.

    codes must already be in {-1, +1}; the gradient is with respect to
    hash_values only.
    """
    h = np.asarray(hash_values, dtype=np.float64)
    b = np.asarray(codes, dtype=np.float64)
    if h.shape != b.shape:
        raise ShapeError(f"shape mismatch: {h.shape} vs {b.shape}")
    if not np.isin(b, (-1.0, 1.0)).all():
        raise ValidationError("codes must contain only -1 and +1")
    n = h.shape[0] if h.ndim == 2 else 1
    resid = h - b
    loss = float((resid * resid).sum() / n)
    return loss, 2.0 * resid / n


def ridge_classification_value(
    codes: np.ndarray,
    labels_onehot: np.ndarray,
    classifier: np.ndarray,
    mu: float,
    nu: float,
) -> float:
    """Value of the regularized linear classification objective on codes.

    codes: (K, N) with items as columns; labels_onehot: (N, C);
    classifier: (K, C). Returns
    mu * sum_i ||y_i - W^T b_i||^2 + nu * ||W||_F^2.
    """
    b = np.asarray(codes, dtype=np.float64)
    y = np.asarray(labels_onehot, dtype=np.float64)
    w = np.asarray(classifier, dtype=np.float64)
    if b.ndim != 2 or y.ndim != 2 or w.ndim != 2:
        raise ValidationError("codes, labels_onehot and classifier must be 2-d")
    if y.shape[0] != b.shape[1] or w.shape != (b.shape[0], y.shape[1]):
        raise ShapeError(
            f"inconsistent shapes: codes {b.shape}, labels {y.shape}, "
            f"classifier {w.shape}"
        )
    resid = y.T - w.T @ b
    return float(mu * (resid * resid).sum() + nu * (w * w).sum())


@dataclass(frozen=True)
class LossBundle:
    """Weighted inner-loop losses; total is fixed by construction."""

    triplet: float
    identity: float
    coupling: float
    lam: float
    sigma: float
    eta: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "total",
            self.lam * self.triplet + self.sigma * self.identity + self.eta * self.coupling,
        )
