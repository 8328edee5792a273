"""Built-in verification battery for the CLI selftest subcommand.

Five groups: gradient, classifier, codes, hamming, metrics. Each group
returns (ok, detail). The perturb argument deliberately corrupts one group
so the failure path can be exercised from the outside.
"""

from __future__ import annotations

import numpy as np

from .hamming import (
    distance_inner_product_check,
    pack_codes,
    rank_gallery,
    unpack_codes,
)
from .losses import batch_hard_triplet, identity_loss, quant_coupling
from .metrics import average_precision, cmc_curve
from .model import sign_binarize
from .hamming import RankedList
from .solver import code_sweep_objective, fit_code_classifier, one_hot, sweep_codes

GROUPS = ("gradient", "classifier", "codes", "hamming", "metrics")

_FD_STEP = 1e-5
_REL_TOL = 1e-4


def fd_gradient(func, x: np.ndarray, step: float = _FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function over an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + step
        up = func(x)
        flat_x[i] = orig - step
        down = func(x)
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def safe_triplet_config(rng: np.random.Generator, gap: float = 1e-3):
    """Sample (h, labels, margin) away from hinge kinks and selection ties."""
    for _ in range(200):
        p = int(rng.integers(2, 4))
        k = int(rng.integers(2, 4))
        if p * k > 8:
            continue
        dim = int(rng.integers(2, 17))
        h = rng.standard_normal((p * k, dim))
        labels = np.repeat(np.arange(p), k)
        margin = float(rng.uniform(0.1, 0.8))
        n = h.shape[0]
        diff = h[:, None, :] - h[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        same = labels[:, None] == labels[None, :]
        pos = np.where(same & ~np.eye(n, dtype=bool), dist, -np.inf)
        neg = np.where(~same, dist, np.inf)
        if dist[~np.eye(n, dtype=bool)].min() < gap:
            continue
        sorted_pos = np.sort(pos, axis=1)
        sorted_neg = np.sort(neg, axis=1)
        pos_gap = sorted_pos[:, -1] - sorted_pos[:, -2]
        neg_gap = sorted_neg[:, 1] - sorted_neg[:, 0]
        hinge = margin + pos.max(axis=1) - neg.min(axis=1)
        if (
            np.isfinite(pos_gap).all()
            and (pos_gap > gap).all()
            and (neg_gap > gap).all()
            and (np.abs(hinge) > gap).all()
        ):
            return h, labels, margin
    raise RuntimeError("could not sample a kink-free triplet configuration")


def gradient_battery(
    rng: np.random.Generator, num_configs: int, perturb: bool = False
) -> tuple[bool, str]:
    """FD-check the three inner losses on random configurations."""
    worst = 0.0
    for c in range(num_configs):
        h, labels, margin = safe_triplet_config(rng)
        _, grad = batch_hard_triplet(h, labels, margin)
        if perturb and c == 0:
            grad = grad + 1e-3
        numeric = fd_gradient(lambda x: batch_hard_triplet(x, labels, margin)[0], h)
        worst = max(worst, max_relative_error(grad, numeric))

        n = h.shape[0]
        num_classes = int(rng.integers(2, 6))
        logits = rng.standard_normal((n, num_classes))
        id_labels = rng.integers(0, num_classes, n)
        _, grad = identity_loss(logits, id_labels)
        numeric = fd_gradient(lambda x: identity_loss(x, id_labels)[0], logits)
        worst = max(worst, max_relative_error(grad, numeric))

        eta = float(rng.uniform(0.05, 2.0))
        codes = sign_binarize(rng.standard_normal(h.shape))
        _, grad = quant_coupling(h, codes)
        numeric = fd_gradient(lambda x: eta * quant_coupling(x, codes)[0], h)
        worst = max(worst, max_relative_error(eta * grad, numeric))
    ok = worst < _REL_TOL
    return ok, f"worst relative error {worst:.3e} over {num_configs} configs"


def classifier_battery(rng: np.random.Generator, num_instances: int) -> tuple[bool, str]:
    """Residual-gradient and fixture checks for the closed-form fit."""
    worst = 0.0
    for _ in range(num_instances):
        k = int(rng.integers(2, 9))
        n = int(rng.integers(4, 40))
        c = int(rng.integers(2, 6))
        mu = float(rng.uniform(0.5, 2.0))
        nu = float(rng.uniform(0.01, 1.0))
        codes = sign_binarize(rng.standard_normal((k, n)))
        y = one_hot(rng.integers(0, c, n), c)
        w = fit_code_classifier(codes, y, mu, nu)
        resid = 2.0 * mu * codes @ (codes.T @ w - y) + 2.0 * nu * w
        scale = 1.0 + np.linalg.norm(codes @ y)
        worst = max(worst, float(np.linalg.norm(resid)) / scale)
    # two orthogonal items, identity labels: codes classify exactly
    codes = np.array([[1.0, 1.0], [-1.0, 1.0]])
    y = np.eye(2)
    w = fit_code_classifier(codes, y, 1.0, 0.0)
    exact = np.allclose(w.T @ codes, y.T, atol=1e-12)
    ok = worst < 1e-8 and exact
    return ok, f"worst residual ratio {worst:.3e}, orthogonal fixture exact: {exact}"


def codes_battery(rng: np.random.Generator, num_instances: int) -> tuple[bool, str]:
    """Sweep monotonicity plus exhaustive per-row optimality on tiny cases."""
    for _ in range(num_instances):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(3, 9))
        c = int(rng.integers(2, 4))
        mu = float(rng.uniform(0.5, 2.0))
        eta = float(rng.uniform(0.01, 1.0))
        w = rng.standard_normal((k, c))
        y = one_hot(rng.integers(0, c, n), c)
        h = rng.standard_normal((k, n))
        codes = sign_binarize(rng.standard_normal((k, n)))
        targets = w @ y.T + (eta / mu) * h
        for _sweep in range(100):
            seen = []
            new_codes = sweep_codes(w, y, h, mu, eta, codes, collect_objectives=seen)
            if any(b > a + 1e-9 for a, b in zip(seen, seen[1:])):
                return False, "objective increased inside a sweep"
            if np.array_equal(new_codes, codes):
                codes = new_codes
                break
            codes = new_codes
        final = code_sweep_objective(w, targets, codes)
        for row in range(k):
            for mask in range(2 ** n):
                cand = codes.copy()
                cand[row] = [1.0 if (mask >> j) & 1 else -1.0 for j in range(n)]
                if code_sweep_objective(w, targets, cand) < final - 1e-9:
                    return False, f"row {row} beaten by enumeration"
    return True, f"{num_instances} instances row-optimal at the fixed point"


def hamming_battery(rng: np.random.Generator) -> tuple[bool, str]:
    for k in (1, 63, 64, 65, 256, 2048):
        for _ in range(20):
            a = sign_binarize(rng.standard_normal(k))
            b = sign_binarize(rng.standard_normal(k))
            dist, dot = distance_inner_product_check(a, b)
            if 2 * dist != k - dot:
                return False, f"identity broken at K={k}"
        codes = sign_binarize(rng.standard_normal((5, k)))
        matrix = pack_codes(codes, np.zeros(5, dtype=np.int64))
        if not np.array_equal(unpack_codes(matrix), codes):
            return False, f"round-trip broken at K={k}"
    # distances (2, 0, 1) from the query: expect order (1, 2, 0)
    query = np.array([[1.0, 1.0, 1.0, 1.0]])
    gallery = np.array(
        [[-1.0, -1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [-1.0, 1.0, 1.0, 1.0]]
    )
    gm = pack_codes(gallery, np.zeros(3, dtype=np.int64))
    qm = pack_codes(query, np.zeros(1, dtype=np.int64))
    ranked = rank_gallery(qm.packed[0], gm)
    if not np.array_equal(ranked.indices, [1, 2, 0]):
        return False, f"rank fixture gave {ranked.indices.tolist()}"
    top2 = rank_gallery(qm.packed[0], gm, top_k=2)
    if not np.array_equal(top2.indices, ranked.indices[:2]):
        return False, "top-k prefix differs from full sort"
    return True, "identity, round-trip and ranking fixtures hold"


def metrics_battery() -> tuple[bool, str]:
    ranking = RankedList(0, np.array([0, 1, 2]), np.array([0, 1, 2]))
    ap = average_precision(ranking, 1, np.array([1, 0, 1]))
    if ap is None or abs(ap - 5.0 / 6.0) > 1e-12:
        return False, f"AP fixture gave {ap}"
    # two queries with first matches at ranks 1 and 3
    rankings = [
        RankedList(0, np.array([0, 1, 2]), np.array([0, 1, 2])),
        RankedList(1, np.array([0, 1, 2]), np.array([0, 1, 2])),
    ]
    gallery_labels = np.array([5, 6, 7])
    curve = cmc_curve(rankings, np.array([5, 7]), gallery_labels, 3)
    if not np.allclose(curve, [0.5, 0.5, 1.0]):
        return False, f"CMC fixture gave {curve.tolist()}"
    none_ap = average_precision(ranking, 9, gallery_labels)
    if none_ap is not None:
        return False, "unmatched query was not signalled as skipped"
    return True, "AP and CMC fixtures hold"


def run_selftest(perturb: str | None = None) -> dict[str, tuple[bool, str]]:
    """Run all groups; perturb names a group to corrupt deliberately."""
    if perturb is not None and perturb not in GROUPS:
        raise ValueError(f"unknown group {perturb!r}, expected one of {GROUPS}")
    rng = np.random.default_rng(20240816)
    results = {}
    results["gradient"] = gradient_battery(rng, 8, perturb == "gradient")
    results["classifier"] = classifier_battery(rng, 20)
    if perturb == "classifier":
        results["classifier"] = (False, "deliberately perturbed")
    results["codes"] = codes_battery(rng, 8)
    if perturb == "codes":
        results["codes"] = (False, "deliberately perturbed")
    results["hamming"] = hamming_battery(rng)
    if perturb == "hamming":
        results["hamming"] = (False, "deliberately perturbed")
    results["metrics"] = metrics_battery()
    if perturb == "metrics":
        results["metrics"] = (False, "deliberately perturbed")
    return results
