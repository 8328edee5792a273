"""Embedding datasets: binary I/O, CSV import, synthetic clusters, P*K batch sampling.

The on-disk embedding format is little-endian throughout:

    magic "DVHE" | u32 version=1 | u32 N | u32 M | u32 C
    N*M float32 features, row-major
    N u32 raw identity labels

Features are stored as 32-bit floats and promoted to 64-bit where the math
needs it. Raw labels are remapped to a dense 0-based range at load time,
ordered by first appearance in the file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    FormatError,
    SamplingError,
    TruncatedFileError,
    ValidationError,
)

EMBEDDING_MAGIC = b"DVHE"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIII")  # magic, version, N, M, C

SPLITS = ("train", "query", "gallery")


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """A fixed collection of embedding rows with identity labels.

    features: (N, M) float32, all finite.
    labels: (N,) int64, identity index per row, dense in [0, num_ids).
    num_ids: count of distinct identities C.
    split: informational role tag, one of "train", "query", "gallery".
    """

    features: np.ndarray
    labels: np.ndarray
    num_ids: int
    split: str = "train"

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValidationError(f"features must be 2-d, got shape {feats.shape}")
        n, m = feats.shape
        if n < 1 or m < 1:
            raise ValidationError(f"need at least one row and one column, got {n}x{m}")
        if not np.isfinite(feats).all():
            raise ValidationError("features contain non-finite entries")
        if labels.shape != (n,):
            raise ValidationError(
                f"labels must have shape ({n},), got {labels.shape}"
            )
        if self.num_ids < 1:
            raise ValidationError("num_ids must be at least 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_ids):
            raise ValidationError(
                f"labels must lie in [0, {self.num_ids}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        if np.unique(labels).size != self.num_ids:
            raise ValidationError(
                "labels are not dense: some identity in "
                f"[0, {self.num_ids}) has no rows"
            )
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def num_rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SamplerConfig:
    """Batch shape for identity-balanced sampling.

    Each batch holds num_identities distinct identities with
    instances_per_identity rows each.
    """

    num_identities: int = 16
    instances_per_identity: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 2:
            raise ValidationError("num_identities must be at least 2")
        if self.instances_per_identity < 2:
            raise ValidationError("instances_per_identity must be at least 2")


@dataclass(frozen=True, eq=False)
class Batch:
    """Row indices into an EmbeddingSet plus their labels."""

    row_indices: np.ndarray
    labels: np.ndarray


def _dense_relabel(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Map raw identity values to 0..C-1, ordered by first appearance."""
    _, first_pos, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_pos))
    return order[inverse].astype(np.int64), int(first_pos.size)


def load_embeddings(path, split: str = "train") -> EmbeddingSet:
    """Read a binary embedding file and densely relabel its identities."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(
            f"{path}: only {len(data)} bytes, header needs {_HEADER.size}"
        )
    magic, version, n, m, c = _HEADER.unpack_from(data, 0)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n < 1 or m < 1 or c < 1:
        raise ValidationError(f"{path}: header declares empty set (N={n}, M={m}, C={c})")
    need = _HEADER.size + 4 * n * m + 4 * n
    if len(data) < need:
        raise TruncatedFileError(f"{path}: {len(data)} bytes, payload needs {need}")
    if len(data) > need:
        raise FormatError(f"{path}: {len(data) - need} trailing bytes after payload")
    feats = np.frombuffer(data, dtype="<f4", count=n * m, offset=_HEADER.size)
    feats = feats.reshape(n, m)
    raw = np.frombuffer(data, dtype="<u4", count=n, offset=_HEADER.size + 4 * n * m)
    if not np.isfinite(feats).all():
        raise ValidationError(f"{path}: features contain non-finite entries")
    labels, seen = _dense_relabel(raw)
    if seen != c:
        raise FormatError(
            f"{path}: header declares {c} identities, labels contain {seen}"
        )
    return EmbeddingSet(feats, labels, seen, split)


def save_embeddings(dset: EmbeddingSet, path) -> None:
    """Write an EmbeddingSet in the binary layout load_embeddings reads."""
    n, m = dset.features.shape
    if n < 1:
        raise ValidationError("refusing to save an empty set")
    header = _HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, n, m, dset.num_ids)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(dset.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(dset.labels, dtype="<u4").tobytes())


def load_embeddings_csv(path, split: str = "train") -> EmbeddingSet:
    """Import headerless CSV rows: M floats followed by an integer label."""
    rows = []
    raw_labels = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) < 2:
                raise FormatError(f"{path}:{lineno}: need at least one float and a label")
            if width is None:
                width = len(fields) - 1
            elif len(fields) - 1 != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} features, got {len(fields) - 1}"
                )
            try:
                rows.append([float(x) for x in fields[:-1]])
                raw_labels.append(int(fields[-1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    feats = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(feats).all():
        raise ValidationError(f"{path}: features contain non-finite entries")
    labels, seen = _dense_relabel(np.asarray(raw_labels))
    return EmbeddingSet(feats.astype(np.float32), labels, seen, split)


def generate_synthetic(
    num_ids: int,
    per_id: int,
    dim: int,
    cluster_spread: float,
    seed: int,
    split: str = "train",
) -> EmbeddingSet:
    """Draw per_id rows per identity from isotropic Gaussian clusters.

    Cluster centers are distinct points on the unit sphere; rows are
    center + cluster_spread * standard normal noise. Deterministic in seed.
    """
    if num_ids < 2:
        raise ValidationError("num_ids must be at least 2")
    if per_id < 2:
        raise ValidationError("per_id must be at least 2")
    if dim < 2:
        raise ValidationError("dim must be at least 2")
    if not cluster_spread > 0:
        raise ValidationError("cluster_spread must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_ids, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    noise = rng.standard_normal((num_ids * per_id, dim))
    feats = np.repeat(centers, per_id, axis=0) + cluster_spread * noise
    labels = np.repeat(np.arange(num_ids, dtype=np.int64), per_id)
    return EmbeddingSet(feats.astype(np.float32), labels, num_ids, split)


def sample_pk_batch(
    dset: EmbeddingSet, cfg: SamplerConfig, rng: np.random.Generator
) -> Batch:
    """Draw one identity-balanced batch.

    Identities are drawn without replacement; rows within an identity are
    drawn without replacement when it has at least instances_per_identity
    rows, with replacement otherwise. Deterministic given the generator
    state.
    """
    p = cfg.num_identities
    k1 = cfg.instances_per_identity
    if dset.num_ids < p:
        raise SamplingError(
            f"cannot draw {p} distinct identities from a set with {dset.num_ids}"
        )
    chosen = rng.choice(dset.num_ids, size=p, replace=False)
    picks = []
    for ident in chosen:
        rows = np.flatnonzero(dset.labels == ident)
        replace = rows.size < k1
        picks.append(rng.choice(rows, size=k1, replace=replace))
    row_indices = np.concatenate(picks).astype(np.int64)
    return Batch(row_indices, dset.labels[row_indices])
