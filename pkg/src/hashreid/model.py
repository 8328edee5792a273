"""Encoder network: adapter trunk, hash projection, identity head.

The architecture is fixed, so gradients are derived by hand rather than by
autodiff: backward() consumes the intermediates retained by forward() and
returns gradients for every parameter. The test suite checks each of them
against central finite differences.

Checkpoint layout (little-endian):

    magic "DVHM" | u32 version=1 | u32 M | u32 M' | u32 K | u32 C | u32 depth
    per adapter layer: weight (M'x M or M'x M') f32 row-major, bias (M') f32
    hash weight (K x M') f32, hash bias (K) f32
    head weight (C x M') f32, head bias (C) f32
    code classifier weight (K x C) f32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ShapeError, TruncatedFileError, ValidationError

CHECKPOINT_MAGIC = b"DVHM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIIIII")  # magic, version, M, M', K, C, depth


@dataclass
class DenseLayer:
    """One affine map with an optional rectifier, weight shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray
    rectifier: bool = True


@dataclass
class ModelParams:
    """All learnable parameters of the encoder.

    adapter: zero or more DenseLayers mapping M to the trunk width M'.
    hash_weight / hash_bias: (K, M') and (K,), produce the code values h.
    head_weight / head_bias: (C, M') and (C,), produce identity logits.
    """

    adapter: list[DenseLayer]
    hash_weight: np.ndarray
    hash_bias: np.ndarray
    head_weight: np.ndarray
    head_bias: np.ndarray

    @property
    def input_dim(self) -> int:
        if self.adapter:
            return self.adapter[0].weight.shape[1]
        return self.hash_weight.shape[1]

    @property
    def trunk_dim(self) -> int:
        return self.hash_weight.shape[1]

    @property
    def num_bits(self) -> int:
        return self.hash_weight.shape[0]

    @property
    def num_classes(self) -> int:
        return self.head_weight.shape[0]


@dataclass
class ForwardTrace:
    """Inputs and every intermediate needed by backward()."""

    rows: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    features: np.ndarray
    hash_values: np.ndarray
    logits: np.ndarray


@dataclass
class ParamGrads:
    """Gradients in the same arrangement as ModelParams."""

    adapter: list[tuple[np.ndarray, np.ndarray]]
    hash_weight: np.ndarray
    hash_bias: np.ndarray
    head_weight: np.ndarray
    head_bias: np.ndarray


def init_params(
    input_dim: int,
    num_bits: int,
    num_classes: int,
    rng: np.random.Generator,
    adapter_depth: int = 1,
    adapter_width: int | None = None,
) -> ModelParams:
    """Seeded initialization: fan-in scaled adapter, small-normal heads."""
    if input_dim < 1 or num_bits < 1 or num_classes < 1:
        raise ValidationError("dimensions must be positive")
    if adapter_depth < 0:
        raise ValidationError("adapter_depth cannot be negative")
    width = adapter_width if adapter_width is not None else input_dim
    if width < 1:
        raise ValidationError("adapter_width must be positive")
    if adapter_depth == 0:
        width = input_dim
    adapter = []
    fan_in = input_dim
    for _ in range(adapter_depth):
        weight = rng.standard_normal((width, fan_in)) / np.sqrt(fan_in)
        adapter.append(DenseLayer(weight, np.zeros(width), rectifier=True))
        fan_in = width
    hash_weight = rng.standard_normal((num_bits, width)) * 0.01
    head_weight = rng.standard_normal((num_classes, width)) * 0.01
    return ModelParams(
        adapter, hash_weight, np.zeros(num_bits), head_weight, np.zeros(num_classes)
    )


def forward(params: ModelParams, rows: np.ndarray) -> ForwardTrace:
    """Run the encoder on a batch of rows, retaining intermediates."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"rows must be 2-d, got shape {x.shape}")
    if x.shape[1] != params.input_dim:
        raise ShapeError(
            f"rows have width {x.shape[1]}, model expects {params.input_dim}"
        )
    if not np.isfinite(x).all():
        raise ValidationError("rows contain non-finite entries")
    pre = []
    act = []
    cur = x
    for layer in params.adapter:
        z = cur @ layer.weight.T + layer.bias
        pre.append(z)
        cur = np.maximum(z, 0.0) if layer.rectifier else z
        act.append(cur)
    features = cur
    hash_values = features @ params.hash_weight.T + params.hash_bias
    logits = features @ params.head_weight.T + params.head_bias
    return ForwardTrace(x, pre, act, features, hash_values, logits)


def sign_binarize(values: np.ndarray) -> np.ndarray:
    """Map to {-1, +1}; zero goes to +1. Idempotent on its own output."""
    return np.where(np.asarray(values, dtype=np.float64) >= 0.0, 1.0, -1.0)


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    grad_hash: np.ndarray | None = None,
    grad_logits: np.ndarray | None = None,
    grad_features_extra: np.ndarray | None = None,
) -> ParamGrads:
    """Backpropagate loss gradients on h, logits, and optionally f directly."""
    if grad_hash is None:
        grad_hash = np.zeros_like(trace.hash_values)
    if grad_logits is None:
        grad_logits = np.zeros_like(trace.logits)
    d_hash_w = grad_hash.T @ trace.features
    d_hash_b = grad_hash.sum(axis=0)
    d_head_w = grad_logits.T @ trace.features
    d_head_b = grad_logits.sum(axis=0)
    grad_f = grad_hash @ params.hash_weight + grad_logits @ params.head_weight
    if grad_features_extra is not None:
        grad_f = grad_f + grad_features_extra
    adapter_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.adapter)
    cur = grad_f
    for i in range(len(params.adapter) - 1, -1, -1):
        layer = params.adapter[i]
        gz = cur * (trace.pre_activations[i] > 0) if layer.rectifier else cur
        below = trace.activations[i - 1] if i > 0 else trace.rows
        adapter_grads[i] = (gz.T @ below, gz.sum(axis=0))
        cur = gz @ layer.weight
    return ParamGrads(adapter_grads, d_hash_w, d_hash_b, d_head_w, d_head_b)


def parameter_list(params: ModelParams) -> list[np.ndarray]:
    """Flatten parameters into a fixed-order list for the optimizer."""
    out = []
    for layer in params.adapter:
        out.append(layer.weight)
        out.append(layer.bias)
    out.extend(
        [params.hash_weight, params.hash_bias, params.head_weight, params.head_bias]
    )
    return out


def gradient_list(grads: ParamGrads) -> list[np.ndarray]:
    """Flatten gradients in the same order as parameter_list."""
    out = []
    for dw, db in grads.adapter:
        out.append(dw)
        out.append(db)
    out.extend(
        [grads.hash_weight, grads.hash_bias, grads.head_weight, grads.head_bias]
    )
    return out


def replace_parameters(params: ModelParams, arrays: list[np.ndarray]) -> ModelParams:
    """Rebuild ModelParams from a parameter_list-ordered list of arrays."""
    expected = 2 * len(params.adapter) + 4
    if len(arrays) != expected:
        raise ValidationError(f"expected {expected} arrays, got {len(arrays)}")
    it = iter(arrays)
    adapter = [
        replace(layer, weight=next(it), bias=next(it)) for layer in params.adapter
    ]
    return ModelParams(adapter, next(it), next(it), next(it), next(it))


def save_checkpoint(path, params: ModelParams, code_classifier: np.ndarray) -> None:
    """Write parameters plus the code classifier weight as float32."""
    k, c = params.num_bits, params.num_classes
    if code_classifier.shape != (k, c):
        raise ValidationError(
            f"code classifier must be ({k}, {c}), got {code_classifier.shape}"
        )
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        FORMAT_VERSION,
        params.input_dim,
        params.trunk_dim,
        k,
        c,
        len(params.adapter),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in parameter_list(params):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(code_classifier, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, np.ndarray]:
    """Read a checkpoint; adapter layers are reconstructed with rectifiers on."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(
            f"{path}: only {len(data)} bytes, header needs {_HEADER.size}"
        )
    magic, version, m, width, k, c, depth = _HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    shapes = []
    fan_in = m
    for _ in range(depth):
        shapes.append((width, fan_in))
        shapes.append((width,))
        fan_in = width
    shapes.extend([(k, width), (k,), (c, width), (c,), (k, c)])
    need = _HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes)
    if len(data) < need:
        raise TruncatedFileError(f"{path}: {len(data)} bytes, payload needs {need}")
    if len(data) > need:
        raise FormatError(f"{path}: {len(data) - need} trailing bytes after payload")
    offset = _HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * count
    code_classifier = arrays.pop()
    adapter = [
        DenseLayer(arrays[2 * i], arrays[2 * i + 1], rectifier=True)
        for i in range(depth)
    ]
    hash_w, hash_b, head_w, head_b = arrays[2 * depth :]
    return ModelParams(adapter, hash_w, hash_b, head_w, head_b), code_classifier
