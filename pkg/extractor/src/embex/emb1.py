"""Writer for the binary embedding format the code trainer consumes.

Layout, all little-endian: a 20-byte header (magic "DVHE", u32 version 1,
u32 N, u32 M, u32 C), then N*M float32 features row-major, then N u32
labels. C must equal the number of distinct label values, and readers
densify labels by first appearance, so label order is preserved as given.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ManifestError

MAGIC = b"DVHE"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_embeddings(features: np.ndarray, labels, path) -> None:
    """Write one row per image with its raw integer label."""
    feats = np.ascontiguousarray(features, dtype="<f4")
    raw = np.ascontiguousarray(labels, dtype="<u4")
    if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
        raise ManifestError(f"features must be a non-empty 2-d matrix, got {feats.shape}")
    if raw.shape != (feats.shape[0],):
        raise ManifestError(
            f"{feats.shape[0]} feature rows but {raw.shape[0] if raw.ndim == 1 else raw.shape} labels"
        )
    if not np.isfinite(feats).all():
        raise ManifestError("features contain non-finite entries")
    n, m = feats.shape
    c = int(np.unique(raw).size)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, m, c))
        fh.write(feats.tobytes())
        fh.write(raw.tobytes())
