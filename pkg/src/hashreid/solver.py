"""Alternating trainer for binary codes.

Each outer iteration runs three stages:

1. Inner loop: a fixed number of SGD steps on the network parameters,
   minimizing lam * triplet + sigma * identity + eta * coupling, where the
   coupling reads the batch columns of the current code matrix B (frozen
   for the whole inner loop).
2. Classifier refit: with B fixed, the code classifier W that minimizes
   mu * sum_i ||y_i - W^T b_i||^2 + nu * ||W||_F^2 has the closed form
   W = (B B^T + (nu/mu) I)^{-1} B Y, obtained here through a
   positive-definite solve.
3. Code sweep: with W and the freshly recomputed network outputs H fixed,
   each row of B is minimized exactly in turn (cyclic coordinate descent
   over rows); the surrogate objective ||W^T B||_F^2 - 2 tr(P^T B) with
   P = W Y^T + (eta/mu) H never increases across row updates.

The ridge classification value is logged before and after stages 2 and 3
so monotonicity can be checked from the outside.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg

from .dataset import EmbeddingSet, SamplerConfig, sample_pk_batch
from .errors import (
    ConfigError,
    OptimizerError,
    ShapeError,
    SingularSystemError,
    ValidationError,
)
from .losses import (
    LossBundle,
    batch_hard_triplet,
    identity_loss,
    quant_coupling,
    ridge_classification_value,
)
from .model import (
    ModelParams,
    backward,
    forward,
    gradient_list,
    init_params,
    parameter_list,
    replace_parameters,
    sign_binarize,
)
from .optimizer import AmsGrad

# Relative change of the total inner loss must stay below this over three
# consecutive outer iterations to trigger early convergence.
CONVERGENCE_TOL = 1e-5
CONVERGENCE_SPAN = 3


@dataclass(frozen=True)
class TrainConfig:
    """Everything the trainer needs besides the data.

    Field names double as config file keys; the file key for lambda_ is
    written "lambda".
    """

    bits: int = 64
    alpha: float = 0.3
    lr: float = 3e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.99
    lambda_: float = 1.0
    sigma: float = 1.0
    mu: float = 1.0
    nu: float = 0.1
    eta: float = 0.1
    p: int = 16
    k1: int = 6
    inner_iters: int = 100
    outer_iters: int = 10
    sweeps: int = 1
    seed: int = 0
    adapter_depth: int = 1
    adapter_width: int | None = None

    def __post_init__(self):
        if self.bits < 1:
            raise ValidationError("bits must be at least 1")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        if not self.mu > 0:
            raise ValidationError("mu must be positive")
        if self.nu < 0 or self.eta < 0:
            raise ValidationError("nu and eta cannot be negative")
        if self.inner_iters < 1:
            raise ValidationError("inner_iters must be at least 1")
        if self.outer_iters < 0:
            raise ValidationError("outer_iters cannot be negative")
        if self.sweeps < 1:
            raise ValidationError("sweeps must be at least 1")
        # p, k1 bounds are enforced by SamplerConfig
        SamplerConfig(self.p, self.k1, self.seed)


_CONFIG_KEYS = {
    "lambda" if f.name == "lambda_" else f.name: f.name for f in fields(TrainConfig)
}


def parse_config_file(path) -> dict:
    """Read flat "key = value" lines into TrainConfig keyword arguments.

    Blank lines and lines starting with '#' are ignored. Unknown keys and
    unparsable values raise ConfigError.
    """
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            field_name = _CONFIG_KEYS[key]
            try:
                out[field_name] = _coerce(field_name, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return out


_INT_FIELDS = {
    "bits", "p", "k1", "inner_iters", "outer_iters", "sweeps", "seed",
    "adapter_depth", "adapter_width",
}


def _coerce(field_name: str, value: str):
    if field_name == "adapter_width" and value.lower() == "none":
        return None
    if field_name in _INT_FIELDS:
        return int(value)
    return float(value)


@dataclass(frozen=True)
class OuterLog:
    """Per-outer-iteration record: mean inner losses and ridge values."""

    step: int
    losses: LossBundle
    ridge_before_classifier: float
    ridge_after_classifier: float
    ridge_after_codes: float


@dataclass
class TrainResult:
    params: ModelParams
    classifier: np.ndarray  # (K, C)
    codes: np.ndarray  # (K, N), entries in {-1, +1}
    history: list[OuterLog]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(N,) int labels to an (N, C) 0/1 float matrix."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def fit_code_classifier(
    codes: np.ndarray, labels_onehot: np.ndarray, mu: float, nu: float
) -> np.ndarray:
    """Closed-form minimizer of the ridge classification objective.

    codes: (K, N) with items as columns, labels_onehot: (N, C). Returns the
    (K, C) weight (B B^T + (nu/mu) I)^{-1} B Y via a Cholesky solve.
    """
    b = np.asarray(codes, dtype=np.float64)
    y = np.asarray(labels_onehot, dtype=np.float64)
    if b.ndim != 2 or y.ndim != 2 or b.shape[1] != y.shape[0]:
        raise ShapeError(f"inconsistent shapes: codes {b.shape}, labels {y.shape}")
    if not mu > 0:
        raise ValidationError("mu must be positive")
    if nu < 0:
        raise ValidationError("nu cannot be negative")
    k = b.shape[0]
    gram = b @ b.T + (nu / mu) * np.eye(k)
    rhs = b @ y
    if nu == 0.0:
        # the solve below can quietly produce one of infinitely many
        # minimizers when the gram is rank-deficient; refuse instead
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= 1e-10 * max(eigs[-1], 1.0):
            raise SingularSystemError(
                "code gram matrix is singular; set nu above zero to regularize"
            )
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
        out = scipy.linalg.cho_solve(factor, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "code gram matrix is singular; set nu above zero to regularize"
        ) from exc
    # a near-zero pivot can survive the factorization; verify the solution
    # against the normal equations instead of trusting it
    residual = 2.0 * mu * np.linalg.norm(gram @ out - rhs)
    if not residual < 1e-8 * (1.0 + np.linalg.norm(rhs)):
        raise SingularSystemError(
            "code gram matrix is singular; set nu above zero to regularize"
        )
    return out


def code_sweep_objective(
    classifier: np.ndarray, targets_p: np.ndarray, codes: np.ndarray
) -> float:
    """Surrogate the code sweep minimizes: ||W^T B||_F^2 - 2 tr(P^T B)."""
    gram = classifier @ classifier.T
    return float(((gram @ codes) * codes).sum() - 2.0 * (targets_p * codes).sum())


def sweep_codes(
    classifier: np.ndarray,
    labels_onehot: np.ndarray,
    hash_outputs: np.ndarray,
    mu: float,
    eta: float,
    codes: np.ndarray,
    collect_objectives: list | None = None,
) -> np.ndarray:
    """One full cyclic sweep of exact row-wise binary minimization.

    classifier: (K, C); labels_onehot: (N, C); hash_outputs: (K, N);
    codes: (K, N) in {-1, +1}. Returns the updated code matrix. When
    collect_objectives is a list, the surrogate objective value is appended
    before the sweep and after every row update.
    """
    w = np.asarray(classifier, dtype=np.float64)
    y = np.asarray(labels_onehot, dtype=np.float64)
    h = np.asarray(hash_outputs, dtype=np.float64)
    b = np.asarray(codes, dtype=np.float64)
    if not mu > 0:
        raise ValidationError("mu must be positive")
    k, n = b.shape
    if w.shape[0] != k or y.shape != (n, w.shape[1]) or h.shape != (k, n):
        raise ShapeError(
            f"inconsistent shapes: classifier {w.shape}, labels {y.shape}, "
            f"hash outputs {h.shape}, codes {b.shape}"
        )
    if not np.isin(b, (-1.0, 1.0)).all():
        raise ValidationError("codes must contain only -1 and +1")
    targets = w @ y.T + (eta / mu) * h  # (K, N)
    gram = w @ w.T
    b = b.copy()
    if collect_objectives is not None:
        collect_objectives.append(code_sweep_objective(w, targets, b))
    for row in range(k):
        # correlation with the other rows, row `row` excluded exactly
        corr = gram[row] @ b - gram[row, row] * b[row]
        b[row] = sign_binarize(targets[row] - corr)
        if collect_objectives is not None:
            collect_objectives.append(code_sweep_objective(w, targets, b))
    return b


def hash_outputs(params: ModelParams, dset: EmbeddingSet) -> np.ndarray:
    """Network code values for every row, items as columns: (K, N)."""
    return forward(params, dset.features).hash_values.T


def train(dset: EmbeddingSet, cfg: TrainConfig) -> TrainResult:
    """Run the full alternating optimization on one embedding set.

    Deterministic in cfg.seed: initialization, batch sampling and every
    update derive from a single seeded generator. Raises OptimizerError
    with the iteration indices if any loss turns non-finite.
    """
    rng = np.random.default_rng(cfg.seed)
    params = init_params(
        dset.dim, cfg.bits, dset.num_ids, rng, cfg.adapter_depth, cfg.adapter_width
    )
    classifier = rng.standard_normal((cfg.bits, dset.num_ids)) * 0.01
    sampler = SamplerConfig(cfg.p, cfg.k1, cfg.seed)
    opt = AmsGrad(
        parameter_list(params),
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
    )
    labels_onehot = one_hot(dset.labels, dset.num_ids)
    codes = sign_binarize(hash_outputs(params, dset))
    history: list[OuterLog] = []
    for t in range(1, cfg.outer_iters + 1):
        sums = np.zeros(3)
        for i in range(cfg.inner_iters):
            batch = sample_pk_batch(dset, sampler, rng)
            trace = forward(params, dset.features[batch.row_indices])
            l_trip, g_trip = batch_hard_triplet(
                trace.hash_values, batch.labels, cfg.alpha
            )
            l_id, g_id = identity_loss(trace.logits, batch.labels)
            batch_codes = codes[:, batch.row_indices].T
            l_cpl, g_cpl = quant_coupling(trace.hash_values, batch_codes)
            if not np.isfinite([l_trip, l_id, l_cpl]).all():
                raise OptimizerError(
                    f"non-finite loss at outer {t} inner {i}: "
                    f"triplet={l_trip} identity={l_id} coupling={l_cpl}"
                )
            grads = backward(
                params,
                trace,
                grad_hash=cfg.lambda_ * g_trip + cfg.eta * g_cpl,
                grad_logits=cfg.sigma * g_id,
            )
            params = replace_parameters(
                params, opt.step(parameter_list(params), gradient_list(grads))
            )
            sums += (l_trip, l_id, l_cpl)
        means = sums / cfg.inner_iters
        bundle = LossBundle(
            means[0], means[1], means[2], cfg.lambda_, cfg.sigma, cfg.eta
        )
        outputs = hash_outputs(params, dset)
        ridge_before = ridge_classification_value(
            codes, labels_onehot, classifier, cfg.mu, cfg.nu
        )
        classifier = fit_code_classifier(codes, labels_onehot, cfg.mu, cfg.nu)
        ridge_mid = ridge_classification_value(
            codes, labels_onehot, classifier, cfg.mu, cfg.nu
        )
        for _ in range(cfg.sweeps):
            codes = sweep_codes(
                classifier, labels_onehot, outputs, cfg.mu, cfg.eta, codes
            )
        ridge_after = ridge_classification_value(
            codes, labels_onehot, classifier, cfg.mu, cfg.nu
        )
        history.append(OuterLog(t, bundle, ridge_before, ridge_mid, ridge_after))
        if _converged(history):
            break
    return TrainResult(params, classifier, codes, history)


def _converged(history: list[OuterLog]) -> bool:
    if len(history) < CONVERGENCE_SPAN + 1:
        return False
    totals = [entry.losses.total for entry in history[-(CONVERGENCE_SPAN + 1) :]]
    for prev, cur in zip(totals, totals[1:]):
        if abs(cur - prev) >= CONVERGENCE_TOL * max(abs(prev), 1e-12):
            return False
    return True
