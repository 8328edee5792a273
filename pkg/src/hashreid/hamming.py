"""Bit-packed codes and Hamming-distance gallery scans.

Bit j of an item lands in 64-bit word j // 64 at position j % 64; words are
little-endian on disk and any padding bits past the code width stay zero.
With codes in {-1, +1}, Hamming distance and the inner product are tied by
d = (K - <a, b>) / 2, which the tests and selftest exercise directly.

Code file layout (little-endian):

    magic "DVHC" | u32 version=1 | u32 K | u32 N
    N * ceil(K/64) u64 packed words, item-major
    N u32 labels
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import model
from .dataset import EmbeddingSet
from .errors import (
    FormatError,
    ShapeError,
    TruncatedFileError,
    ValidationError,
)

CODES_MAGIC = b"DVHC"
FORMAT_VERSION = 1
WORD_BITS = 64

_HEADER = struct.Struct("<4sIII")  # magic, version, K, N

THREADS_ENV = "DVHN_THREADS"


def words_per_item(num_bits: int) -> int:
    return (num_bits + WORD_BITS - 1) // WORD_BITS


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Packed codes for N items: (N, words) uint64 plus labels."""

    packed: np.ndarray
    num_bits: int
    labels: np.ndarray

    def __post_init__(self):
        packed = np.ascontiguousarray(self.packed, dtype=np.uint64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.num_bits < 1:
            raise ValidationError("num_bits must be at least 1")
        if packed.shape[0] < 1:
            raise ValidationError("need at least one item")
        words = words_per_item(self.num_bits)
        if packed.ndim != 2 or packed.shape[1] != words:
            raise ShapeError(
                f"packed must be (N, {words}) for {self.num_bits} bits, "
                f"got {packed.shape}"
            )
        if labels.shape != (packed.shape[0],):
            raise ShapeError(
                f"labels must have shape ({packed.shape[0]},), got {labels.shape}"
            )
        tail = self.num_bits % WORD_BITS
        if tail and packed.shape[0]:
            mask = np.uint64((1 << tail) - 1)
            if np.any(packed[:, -1] & ~mask):
                raise ValidationError("padding bits past the code width are set")
        packed.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "packed", packed)
        object.__setattr__(self, "labels", labels)

    @property
    def num_items(self) -> int:
        return self.packed.shape[0]


@dataclass(frozen=True, eq=False)
class RankedList:
    """Gallery indices for one query, nearest first, ties by lower index."""

    query_index: int
    indices: np.ndarray
    distances: np.ndarray


def pack_codes(codes: np.ndarray, labels: np.ndarray) -> CodeMatrix:
    """Pack a (N, K) matrix of {-1, +1} into 64-bit words; +1 becomes bit 1."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValidationError(f"codes must be 2-d, got shape {codes.shape}")
    if not np.isin(codes, (-1, 1)).all():
        raise ValidationError("codes must contain only -1 and +1")
    n, k = codes.shape
    bits = (codes > 0).astype(np.uint8)
    padded_k = words_per_item(k) * WORD_BITS
    if padded_k != k:
        bits = np.hstack([bits, np.zeros((n, padded_k - k), dtype=np.uint8)])
    packed_bytes = np.packbits(bits, axis=1, bitorder="little")
    packed = packed_bytes.view("<u8").astype(np.uint64)
    return CodeMatrix(packed, k, np.asarray(labels, dtype=np.int64))


def unpack_codes(matrix: CodeMatrix) -> np.ndarray:
    """Inverse of pack_codes: (N, K) float matrix of {-1, +1}."""
    as_bytes = matrix.packed.astype("<u8").view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, : matrix.num_bits]
    return np.where(bits == 1, 1.0, -1.0)


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Popcount of XOR over the packed words of two items."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ShapeError(f"word shapes differ: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a ^ b).sum())


def distance_inner_product_check(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """Compute (hamming distance, inner product) for two {-1,+1} vectors.

    The two values come from independent paths (bit operations vs integer
    arithmetic); callers assert d == (K - dot) / 2.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"need equal-length vectors, got {a.shape} and {b.shape}")
    zero = np.zeros(1, dtype=np.int64)
    pa = pack_codes(a[None, :], zero)
    pb = pack_codes(b[None, :], zero)
    dist = hamming_distance(pa.packed[0], pb.packed[0])
    dot = int(np.rint(np.dot(a.astype(np.float64), b.astype(np.float64))))
    return dist, dot


def rank_gallery(
    query_words: np.ndarray,
    gallery: CodeMatrix,
    top_k: int | None = None,
    query_index: int = 0,
) -> RankedList:
    """Scan every gallery item; sort by distance, ties by ascending index.

    With top_k set, the returned prefix is exactly the first top_k entries
    of the full sorted order.
    """
    if gallery.num_items < 1:
        raise ValidationError("gallery is empty")
    query_words = np.asarray(query_words, dtype=np.uint64)
    if query_words.shape != (gallery.packed.shape[1],):
        raise ShapeError(
            f"query has {query_words.shape} words, gallery items have "
            f"({gallery.packed.shape[1]},)"
        )
    dists = np.bitwise_count(gallery.packed ^ query_words).sum(axis=1)
    dists = dists.astype(np.int64)
    n = gallery.num_items
    if top_k is not None:
        if top_k < 1:
            raise ValidationError("top_k must be at least 1")
        top_k = min(top_k, n)
    if top_k is not None and top_k < n:
        # composite key makes the partition respect the index tie rule
        composite = dists * n + np.arange(n, dtype=np.int64)
        part = np.argpartition(composite, top_k - 1)[:top_k]
        order = part[np.argsort(composite[part])]
    else:
        order = np.argsort(dists, kind="stable")
    return RankedList(query_index, order, dists[order])


def float_rank_gallery(
    query_vec: np.ndarray, gallery_vecs: np.ndarray, query_index: int = 0
) -> RankedList:
    """Euclidean full scan with the same tie rule as rank_gallery."""
    q = np.asarray(query_vec, dtype=np.float64)
    g = np.asarray(gallery_vecs, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1:
        raise ValidationError(f"gallery must be a non-empty 2-d matrix, got {g.shape}")
    if q.shape != (g.shape[1],):
        raise ShapeError(f"query shape {q.shape} does not match gallery width {g.shape[1]}")
    diff = g - q
    dists = np.sqrt((diff * diff).sum(axis=1))
    order = np.argsort(dists, kind="stable")
    return RankedList(query_index, order, dists[order])


def encode_set(params: model.ModelParams, dset: EmbeddingSet) -> CodeMatrix:
    """Forward, binarize and pack a whole embedding set; labels carry over."""
    trace = model.forward(params, dset.features)
    return pack_codes(model.sign_binarize(trace.hash_values), dset.labels)


def save_codes(matrix: CodeMatrix, path) -> None:
    """Write a CodeMatrix in the binary layout load_codes reads."""
    header = _HEADER.pack(
        CODES_MAGIC, FORMAT_VERSION, matrix.num_bits, matrix.num_items
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(matrix.packed, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(matrix.labels, dtype="<u4").tobytes())


def load_codes(path) -> CodeMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(
            f"{path}: only {len(data)} bytes, header needs {_HEADER.size}"
        )
    magic, version, k, n = _HEADER.unpack_from(data, 0)
    if magic != CODES_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CODES_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if k < 1 or n < 1:
        raise ValidationError(f"{path}: header declares empty codes (K={k}, N={n})")
    words = words_per_item(k)
    need = _HEADER.size + 8 * n * words + 4 * n
    if len(data) < need:
        raise TruncatedFileError(f"{path}: {len(data)} bytes, payload needs {need}")
    if len(data) > need:
        raise FormatError(f"{path}: {len(data) - need} trailing bytes after payload")
    packed = np.frombuffer(data, dtype="<u8", count=n * words, offset=_HEADER.size)
    labels = np.frombuffer(
        data, dtype="<u4", count=n, offset=_HEADER.size + 8 * n * words
    )
    return CodeMatrix(packed.reshape(n, words), k, labels.astype(np.int64))


def scan_thread_cap() -> int:
    """Parallelism cap for gallery scans, from the DVHN_THREADS variable."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValidationError(f"{THREADS_ENV} must be at least 1, got {cap}")
    return cap
