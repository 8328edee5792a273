"""AMSGrad with bias correction and decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .errors import OptimizerError, ValidationError


class AmsGrad:
    """Keeps first/second moment estimates and the running max of the second.

    step() returns new parameter arrays; the update applied to each entry is

        p <- p - lr * m_hat / (sqrt(v_bar) + eps) - lr * weight_decay * p

    where m_hat and v_bar are the bias-corrected first moment and the
    bias-corrected running maximum of the second moment.
    """

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.99,
        eps: float = 1e-8,
        weight_decay: float = 5e-4,
    ):
        if not params:
            raise ValidationError("need at least one parameter array")
        if not lr > 0:
            raise ValidationError("lr must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValidationError("betas must lie in [0, 1)")
        if weight_decay < 0:
            raise ValidationError("weight_decay cannot be negative")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v_hat = [np.zeros_like(p, dtype=np.float64) for p in params]

    def step(
        self, params: list[np.ndarray], grads: list[np.ndarray]
    ) -> list[np.ndarray]:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValidationError(
                f"optimizer tracks {len(self.m)} arrays, "
                f"got {len(params)} params and {len(grads)} grads"
            )
        for i, g in enumerate(grads):
            if not np.isfinite(g).all():
                raise OptimizerError(
                    f"non-finite gradient in parameter {i} at step {self.t + 1}"
                )
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            g = np.asarray(g, dtype=np.float64)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            self.v_hat[i] = np.maximum(self.v_hat[i], self.v[i])
            m_hat = self.m[i] / bias1
            v_bar = self.v_hat[i] / bias2
            update = self.lr * m_hat / (np.sqrt(v_bar) + self.eps)
            out.append(p - update - self.lr * self.weight_decay * p)
        return out
