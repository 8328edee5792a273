import json

import pytest

from hashreid.bench import bench_json, format_bench, run_bench
from hashreid.errors import ValidationError


def test_report_well_formed_small():
    report = run_bench(64, 300, 4, seed=0, repeats=3)
    assert report.bits == 64
    assert report.num_gallery == 300 and report.num_query == 4
    assert report.hamming_total_seconds > 0
    assert report.euclidean_total_seconds > 0
    assert report.speedup_ratio > 0
    assert report.threads == 1
    assert report.hamming_threaded_seconds is None


def test_single_item_gallery():
    report = run_bench(64, 1, 1, seed=1, repeats=3)
    assert report.code_bytes_total == 8
    assert report.float64_bytes_total == 8 * 64
    assert report.storage_ratio == 64.0


def test_storage_accounting_wide():
    report = run_bench(2048, 10, 2, seed=2, repeats=3)
    assert report.code_bytes_total == 10 * 256
    assert report.float64_bytes_total == 10 * 16384
    assert report.storage_ratio == 64.0


def test_storage_accounting_partial_word():
    # 63 bits still occupy one 8-byte word per item
    report = run_bench(63, 5, 1, seed=3, repeats=3)
    assert report.code_bytes_total == 5 * 8
    assert report.float64_bytes_total == 5 * 8 * 63
    assert report.storage_ratio == 63.0


def test_ordering_cross_check_runs():
    # run_bench verifies packed-vs-float orderings on every query before
    # timing anything; surviving a few hundred items means they agreed
    report = run_bench(96, 500, 3, seed=4, repeats=3)
    assert report.num_gallery == 500


def test_threaded_pass_reported():
    report = run_bench(64, 200, 2, seed=5, repeats=3, threads=2)
    assert report.threads == 2
    assert report.hamming_threaded_seconds is not None
    assert report.hamming_threaded_seconds > 0


def test_rejects_bad_sizes():
    with pytest.raises(ValidationError):
        run_bench(0, 10, 1)
    with pytest.raises(ValidationError):
        run_bench(64, 0, 1)
    with pytest.raises(ValidationError):
        run_bench(64, 10, 1, repeats=2)


def test_text_and_json_outputs():
    report = run_bench(64, 50, 2, seed=6, repeats=3)
    text = format_bench(report)
    assert "storage_ratio" in text
    blob = json.loads(bench_json(report))
    assert blob["bits"] == 64
    assert blob["storage_ratio"] == 64.0
    assert blob["code_bytes_total"] == 50 * 8
