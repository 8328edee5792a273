"""Retrieval quality: per-query average precision and the match-rate curve.

A query whose label never occurs in the gallery cannot be scored; it is
skipped and counted, never treated as zero.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .hamming import CodeMatrix, RankedList, rank_gallery, scan_thread_cap


def average_precision(
    ranking: RankedList, query_label: int, gallery_labels: np.ndarray
) -> float | None:
    """Mean of precision at each relevant position; None when nothing matches."""
    rel = np.asarray(gallery_labels)[ranking.indices] == query_label
    total = int(rel.sum())
    if total == 0:
        return None
    positions = np.flatnonzero(rel) + 1
    hits = np.arange(1, total + 1)
    return float((hits / positions).sum() / total)


def first_match_rank(
    ranking: RankedList, query_label: int, gallery_labels: np.ndarray
) -> int | None:
    """1-based rank of the first correct item, None when nothing matches."""
    rel = np.asarray(gallery_labels)[ranking.indices] == query_label
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return None
    return int(hits[0]) + 1


def cmc_curve(
    rankings: list[RankedList],
    query_labels: np.ndarray,
    gallery_labels: np.ndarray,
    max_rank: int,
) -> np.ndarray:
    """Fraction of scorable queries whose first match lands within each rank."""
    if max_rank < 1:
        raise ValidationError("max_rank must be at least 1")
    query_labels = np.asarray(query_labels)
    if len(rankings) != query_labels.shape[0]:
        raise ShapeError(
            f"{len(rankings)} rankings but {query_labels.shape[0]} query labels"
        )
    ranks = []
    for ranking, label in zip(rankings, query_labels):
        r = first_match_rank(ranking, label, gallery_labels)
        if r is not None:
            ranks.append(r)
    if not ranks:
        raise ValidationError("no query has a relevant gallery item")
    ranks = np.asarray(ranks)
    cutoffs = np.arange(1, max_rank + 1)
    return (ranks[None, :] <= cutoffs[:, None]).mean(axis=1)


@dataclass(frozen=True)
class EvalReport:
    cmc: np.ndarray
    mean_ap: float
    num_queries: int
    num_queries_skipped: int


def _drop_self(ranking: RankedList, self_index: int) -> RankedList:
    keep = ranking.indices != self_index
    return RankedList(ranking.query_index, ranking.indices[keep], ranking.distances[keep])


def evaluate(
    query_codes: CodeMatrix,
    gallery_codes: CodeMatrix,
    max_rank: int = 20,
    exclude_self: bool = False,
) -> EvalReport:
    """Rank every query against the gallery and aggregate AP and match rates.

    exclude_self removes the gallery item whose index equals the query
    index, for the case where the two files describe the same item list.
    The report is invariant to gallery permutations (labels move with
    their items).
    """
    if query_codes.num_bits != gallery_codes.num_bits:
        raise ShapeError(
            f"query codes have {query_codes.num_bits} bits, "
            f"gallery codes have {gallery_codes.num_bits}"
        )
    if exclude_self and gallery_codes.num_items < 2:
        raise ValidationError("cannot exclude self from a single-item gallery")
    cap = scan_thread_cap()

    def rank_one(qi: int) -> RankedList:
        ranking = rank_gallery(query_codes.packed[qi], gallery_codes, query_index=qi)
        if exclude_self:
            ranking = _drop_self(ranking, qi)
        return ranking

    n_query = query_codes.num_items
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            rankings = list(pool.map(rank_one, range(n_query)))
    else:
        rankings = [rank_one(qi) for qi in range(n_query)]
    ap_values = []
    ranks = []
    skipped = 0
    for qi, ranking in enumerate(rankings):
        label = query_codes.labels[qi]
        ap = average_precision(ranking, label, gallery_codes.labels)
        if ap is None:
            skipped += 1
            continue
        ap_values.append(ap)
        ranks.append(first_match_rank(ranking, label, gallery_codes.labels))
    if not ap_values:
        raise ValidationError("no query has a relevant gallery item")
    ranks = np.asarray(ranks)
    cutoffs = np.arange(1, max_rank + 1)
    cmc = (ranks[None, :] <= cutoffs[:, None]).mean(axis=1)
    return EvalReport(cmc, float(np.mean(ap_values)), n_query, skipped)


def format_report(report: EvalReport) -> str:
    lines = [
        f"rank_{r} = {value:.6f}"
        for r, value in enumerate(report.cmc, start=1)
    ]
    lines.append(f"map = {report.mean_ap:.6f}")
    return "\n".join(lines)


def report_json(report: EvalReport) -> str:
    return json.dumps(
        {
            "cmc": [float(v) for v in report.cmc],
            "map": report.mean_ap,
            "num_queries": report.num_queries,
            "skipped": report.num_queries_skipped,
        }
    )
