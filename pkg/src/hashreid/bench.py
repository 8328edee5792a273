"""Storage and latency comparison: packed Hamming scan vs float64 Euclidean.

Timings are medians over repeated warm-cache passes and depend on the host;
the storage accounting is exact. Both scans are verified to produce the
same orderings before anything is timed, since the float vectors are the
{-1, +1} embeddings of the codes.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .hamming import float_rank_gallery, pack_codes, rank_gallery, words_per_item


@dataclass(frozen=True)
class BenchReport:
    bits: int
    num_gallery: int
    num_query: int
    hamming_total_seconds: float
    euclidean_total_seconds: float
    speedup_ratio: float
    code_bytes_total: int
    float64_bytes_total: int
    storage_ratio: float
    threads: int = 1
    hamming_threaded_seconds: float | None = None


def run_bench(
    bits: int,
    num_gallery: int,
    num_query: int,
    seed: int = 0,
    repeats: int = 5,
    threads: int = 1,
) -> BenchReport:
    """Time full scans of random codes in both representations."""
    if bits < 1 or num_gallery < 1 or num_query < 1:
        raise ValidationError("bits and set sizes must be positive")
    if repeats < 3:
        raise ValidationError("repeats must be at least 3")
    if threads < 1:
        raise ValidationError("threads must be at least 1")
    rng = np.random.default_rng(seed)
    gallery_pm1 = np.where(rng.integers(0, 2, (num_gallery, bits)) == 1, 1.0, -1.0)
    query_pm1 = np.where(rng.integers(0, 2, (num_query, bits)) == 1, 1.0, -1.0)
    zeros = np.zeros(num_gallery, dtype=np.int64)
    gallery = pack_codes(gallery_pm1, zeros)
    query = pack_codes(query_pm1, np.zeros(num_query, dtype=np.int64))

    # correctness before speed: orderings must agree on every query
    for qi in range(num_query):
        packed_order = rank_gallery(query.packed[qi], gallery, query_index=qi).indices
        float_order = float_rank_gallery(query_pm1[qi], gallery_pm1, query_index=qi).indices
        if not np.array_equal(packed_order, float_order):
            raise AssertionError(f"scan orderings diverged on query {qi}")

    def hamming_pass():
        for qi in range(num_query):
            rank_gallery(query.packed[qi], gallery, query_index=qi)

    def euclidean_pass():
        for qi in range(num_query):
            float_rank_gallery(query_pm1[qi], gallery_pm1, query_index=qi)

    def threaded_pass():
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(
                pool.map(
                    lambda qi: rank_gallery(query.packed[qi], gallery, query_index=qi),
                    range(num_query),
                )
            )

    hamming_seconds = _median_seconds(hamming_pass, repeats)
    euclidean_seconds = _median_seconds(euclidean_pass, repeats)
    threaded_seconds = _median_seconds(threaded_pass, repeats) if threads > 1 else None

    code_bytes = num_gallery * 8 * words_per_item(bits)
    float_bytes = num_gallery * 8 * bits
    return BenchReport(
        bits=bits,
        num_gallery=num_gallery,
        num_query=num_query,
        hamming_total_seconds=hamming_seconds,
        euclidean_total_seconds=euclidean_seconds,
        speedup_ratio=euclidean_seconds / hamming_seconds,
        code_bytes_total=code_bytes,
        float64_bytes_total=float_bytes,
        storage_ratio=float_bytes / code_bytes,
        threads=threads,
        hamming_threaded_seconds=threaded_seconds,
    )


def _median_seconds(fn, repeats: int) -> float:
    fn()  # warm caches before the first measurement
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def format_bench(report: BenchReport) -> str:
    lines = [
        f"bits = {report.bits}",
        f"gallery = {report.num_gallery}",
        f"queries = {report.num_query}",
        f"hamming_total_seconds = {report.hamming_total_seconds:.6f}",
        f"euclidean_total_seconds = {report.euclidean_total_seconds:.6f}",
        f"speedup_ratio = {report.speedup_ratio:.3f}",
        f"code_bytes_total = {report.code_bytes_total}",
        f"float64_bytes_total = {report.float64_bytes_total}",
        f"storage_ratio = {report.storage_ratio:.3f}",
    ]
    if report.hamming_threaded_seconds is not None:
        lines.append(f"threads = {report.threads}")
        lines.append(
            f"hamming_threaded_seconds = {report.hamming_threaded_seconds:.6f}"
        )
    return "\n".join(lines)


def bench_json(report: BenchReport) -> str:
    payload = {
        "bits": report.bits,
        "num_gallery": report.num_gallery,
        "num_query": report.num_query,
        "hamming_total_seconds": report.hamming_total_seconds,
        "euclidean_total_seconds": report.euclidean_total_seconds,
        "speedup_ratio": report.speedup_ratio,
        "code_bytes_total": report.code_bytes_total,
        "float64_bytes_total": report.float64_bytes_total,
        "storage_ratio": report.storage_ratio,
        "threads": report.threads,
        "hamming_threaded_seconds": report.hamming_threaded_seconds,
    }
    return json.dumps(payload)
