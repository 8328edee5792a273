"""Shared oracles for the test suite.

Everything here is deliberately written the slow, obvious way (loops,
per-bit counting, scalar recurrences) so it can disagree with the
library when the library is wrong.
"""

from __future__ import annotations

import numpy as np


def central_difference(func, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Gradient of a scalar function by central differences, one entry at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    probe = x.copy()
    probe_flat = probe.ravel()
    for i in range(probe_flat.size):
        orig = probe_flat[i]
        probe_flat[i] = orig + step
        hi = func(probe)
        probe_flat[i] = orig - step
        lo = func(probe)
        probe_flat[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def worst_relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Largest elementwise relative difference, floored denominator."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def slow_triplet_loss(hash_values: np.ndarray, labels: np.ndarray, margin: float) -> float:
    """Batch-hard triplet loss with explicit python loops."""
    h = np.asarray(hash_values, dtype=np.float64)
    labels = np.asarray(labels)
    n = h.shape[0]
    total = 0.0
    for a in range(n):
        dp = -1.0
        dn = np.inf
        for j in range(n):
            if j == a:
                continue
            d = float(np.linalg.norm(h[a] - h[j]))
            if labels[j] == labels[a]:
                dp = max(dp, d)
            else:
                dn = min(dn, d)
        total += max(0.0, margin + dp - dn)
    return total / n


def slow_softmax_ce(logits: np.ndarray, labels: np.ndarray) -> float:
    z = np.asarray(logits, dtype=np.float64)
    total = 0.0
    for i, lab in enumerate(labels):
        row = z[i] - z[i].max()
        total += -(row[lab] - np.log(np.exp(row).sum()))
    return total / z.shape[0]


def slow_amsgrad_step(p, m, v, vhat, t, g, lr, beta1, beta2, eps, wd):
    """One scalar step of the reference recurrence. Returns new (p, m, v, vhat)."""
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    vhat = max(vhat, v)
    m_hat = m / (1.0 - beta1**t)
    v_bar = vhat / (1.0 - beta2**t)
    p = p - lr * m_hat / (np.sqrt(v_bar) + eps) - lr * wd * p
    return p, m, v, vhat


def per_bit_hamming(code_a: np.ndarray, code_b: np.ndarray) -> int:
    """Distance between two {-1,+1} vectors, counted one position at a time."""
    count = 0
    for x, y in zip(code_a, code_b):
        if (x > 0) != (y > 0):
            count += 1
    return count


def slow_average_precision(ranked_labels, query_label) -> float | None:
    hits = 0
    ap = 0.0
    for pos, lab in enumerate(ranked_labels, start=1):
        if lab == query_label:
            hits += 1
            ap += hits / pos
    if hits == 0:
        return None
    return ap / hits


def draw_clustered_batch(rng: np.random.Generator, num_ids: int, per_id: int, dim: int):
    """Well-separated identity clusters; hinge terms stay far from the kink."""
    centers = rng.normal(size=(num_ids, dim)) * 4.0
    rows = np.repeat(centers, per_id, axis=0) + rng.normal(size=(num_ids * per_id, dim)) * 0.05
    labels = np.repeat(np.arange(num_ids), per_id)
    return rows, labels


def draw_safe_triplet_input(rng: np.random.Generator, gap: float = 1e-3):
    """Random batch whose hardest-pair selections and hinge values all
    clear `gap`, so finite differences never straddle a kink.

    Returns (hash_values, labels). Rejection-samples; the acceptance rate
    at these sizes is high enough that 500 tries never trip in practice.
    """
    from hashreid.losses import batch_hard_triplet

    for _ in range(500):
        num_ids = int(rng.integers(2, 4))
        per_id = int(rng.integers(2, 4))
        n = num_ids * per_id
        if n > 8:
            continue
        dim = int(rng.integers(2, 17))
        h = rng.normal(size=(n, dim)) * 2.0
        labels = np.repeat(np.arange(num_ids), per_id)
        margin = 0.3

        dists = np.linalg.norm(h[:, None, :] - h[None, :, :], axis=2)
        off_diag = dists[~np.eye(n, dtype=bool)]
        if off_diag.min() < gap:
            continue

        ok = True
        for a in range(n):
            same = (labels == labels[a]) & (np.arange(n) != a)
            diff = labels != labels[a]
            pos = np.sort(dists[a][same])
            neg = np.sort(dists[a][diff])
            if pos.size > 1 and pos[-1] - pos[-2] < gap:
                ok = False
                break
            if neg.size > 1 and neg[1] - neg[0] < gap:
                ok = False
                break
            if abs(margin + pos[-1] - neg[0]) < gap:
                ok = False
                break
        if not ok:
            continue

        loss, _ = batch_hard_triplet(h, labels, margin)
        if loss > 0:
            return h, labels
    raise RuntimeError("could not draw a kink-free triplet batch")
