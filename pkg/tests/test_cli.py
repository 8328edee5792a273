import json
import shutil
import subprocess

import numpy as np
import pytest

from hashreid.cli import main
from hashreid.dataset import generate_synthetic, save_embeddings
from hashreid.hamming import load_codes, pack_codes, save_codes
from hashreid.model import load_checkpoint


TRAIN_ARGS = [
    "--bits", "4", "--p", "2", "--k1", "2",
    "--inner-iters", "2", "--outer-iters", "2", "--seed", "3",
]


@pytest.fixture()
def emb_path(tmp_path):
    dset = generate_synthetic(3, 4, 6, 0.1, seed=0)
    path = tmp_path / "train.emb"
    save_embeddings(dset, path)
    return path


def run_train(emb_path, tmp_path, name="model.bin", extra=()):
    ckpt = tmp_path / name
    rc = main(["train", str(emb_path), str(ckpt), *TRAIN_ARGS, *extra])
    assert rc == 0
    return ckpt


# --- train ---


def test_train_writes_checkpoint_and_history(emb_path, tmp_path, capsys):
    ckpt = run_train(emb_path, tmp_path)
    out = capsys.readouterr().out
    assert "4-bit model on 12 rows" in out
    assert ckpt.exists()
    history = (tmp_path / "model.bin.history").read_text().strip().splitlines()
    assert len(history) == 2
    for i, line in enumerate(history, start=1):
        cols = line.split()
        assert len(cols) == 6
        assert int(cols[0]) == i
        assert all(np.isfinite(float(c)) for c in cols[1:])


def test_train_history_flag(emb_path, tmp_path):
    ckpt = tmp_path / "m.bin"
    hist = tmp_path / "elsewhere.log"
    rc = main(
        ["train", str(emb_path), str(ckpt), *TRAIN_ARGS, "--history", str(hist)]
    )
    assert rc == 0
    assert hist.exists()
    assert not (tmp_path / "m.bin.history").exists()


def test_train_deterministic(emb_path, tmp_path):
    a = run_train(emb_path, tmp_path, "a.bin")
    b = run_train(emb_path, tmp_path, "b.bin")
    assert a.read_bytes() == b.read_bytes()
    hist_a = (tmp_path / "a.bin.history").read_bytes()
    hist_b = (tmp_path / "b.bin.history").read_bytes()
    assert hist_a == hist_b


def test_train_missing_input_names_path(tmp_path, capsys):
    rc = main(["train", str(tmp_path / "absent.emb"), str(tmp_path / "m.bin")])
    assert rc == 2
    assert "absent.emb" in capsys.readouterr().err


def test_train_config_file_with_flag_override(emb_path, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "bits = 8\nouter_iters = 1\np = 2\nk1 = 2\ninner_iters = 2\nseed = 1\n"
    )
    ckpt = tmp_path / "m.bin"
    # the flag wins over the file: bits 4, not 8
    rc = main(
        ["train", str(emb_path), str(ckpt), "--config", str(cfg), "--bits", "4"]
    )
    assert rc == 0
    params, _ = load_checkpoint(ckpt)
    assert params.num_bits == 4
    history = (tmp_path / "m.bin.history").read_text().strip().splitlines()
    assert len(history) == 1  # outer_iters from the file still applies


def test_train_bad_config_key(emb_path, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("warmup = 5\n")
    rc = main(["train", str(emb_path), str(tmp_path / "m.bin"), "--config", str(cfg)])
    assert rc == 2
    assert "warmup" in capsys.readouterr().err


def test_train_csv_format(tmp_path):
    rows = tmp_path / "rows.csv"
    rng = np.random.default_rng(5)
    lines = []
    for i in range(8):
        vals = ",".join(f"{v:.5f}" for v in rng.normal(size=5))
        lines.append(f"{vals},{i % 2}")
    rows.write_text("\n".join(lines) + "\n")
    rc = main(["train", str(rows), str(tmp_path / "m.bin"), "--format", "csv", *TRAIN_ARGS])
    assert rc == 0


# --- encode ---


def test_encode_writes_codes(emb_path, tmp_path, capsys):
    ckpt = run_train(emb_path, tmp_path)
    codes_path = tmp_path / "train.codes"
    rc = main(["encode", str(ckpt), str(emb_path), str(codes_path)])
    assert rc == 0
    codes = load_codes(codes_path)
    assert codes.num_items == 12
    assert codes.num_bits == 4
    assert "12 codes of 4 bits" in capsys.readouterr().out


def test_encode_idempotent_bytes(emb_path, tmp_path):
    ckpt = run_train(emb_path, tmp_path)
    p1, p2 = tmp_path / "one.codes", tmp_path / "two.codes"
    assert main(["encode", str(ckpt), str(emb_path), str(p1)]) == 0
    assert main(["encode", str(ckpt), str(emb_path), str(p2)]) == 0
    assert p1.read_bytes() == p2.read_bytes()


def test_encode_dimension_mismatch(emb_path, tmp_path, capsys):
    ckpt = run_train(emb_path, tmp_path)
    other = generate_synthetic(3, 4, 9, 0.1, seed=1)
    other_path = tmp_path / "wide.emb"
    save_embeddings(other, other_path)
    rc = main(["encode", str(ckpt), str(other_path), str(tmp_path / "c.bin")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "6" in err and "9" in err


def test_encode_corrupt_checkpoint(emb_path, tmp_path, capsys):
    ckpt = run_train(emb_path, tmp_path)
    blob = bytearray(ckpt.read_bytes())
    blob[:4] = b"JUNK"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(blob))
    rc = main(["encode", str(bad), str(emb_path), str(tmp_path / "c.bin")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


# --- query ---


def write_fixture_codes(tmp_path):
    """Gallery at distances (2, 0, 1) from an all-ones query code."""
    q = np.ones((1, 8))
    gallery = np.ones((3, 8))
    gallery[0, :2] = -1
    gallery[2, :1] = -1
    g_path = tmp_path / "gallery.codes"
    q_path = tmp_path / "query.codes"
    save_codes(pack_codes(gallery, np.array([0, 1, 2])), g_path)
    save_codes(pack_codes(q, np.array([1])), q_path)
    return g_path, q_path


def test_query_output_format(tmp_path, capsys):
    g_path, q_path = write_fixture_codes(tmp_path)
    rc = main(["query", str(g_path), str(q_path), "--top-k", "3"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "0: 1(0) 2(1) 0(2)"


def test_query_top_k_beyond_gallery(tmp_path, capsys):
    g_path, q_path = write_fixture_codes(tmp_path)
    rc = main(["query", str(g_path), str(q_path), "--top-k", "50"])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.count("(") == 3  # full list, no padding


def test_query_empty_file(tmp_path, capsys):
    g_path, _ = write_fixture_codes(tmp_path)
    empty = tmp_path / "empty.codes"
    empty.write_bytes(b"")
    rc = main(["query", str(g_path), str(empty)])
    assert rc == 2


def test_query_bit_width_mismatch(tmp_path, capsys):
    g_path, _ = write_fixture_codes(tmp_path)
    wide = tmp_path / "wide.codes"
    save_codes(pack_codes(np.ones((1, 16)), np.array([0])), wide)
    rc = main(["query", str(g_path), str(wide)])
    assert rc == 2
    assert "bits" in capsys.readouterr().err


# --- eval ---


def write_eval_codes(tmp_path):
    codes = np.ones((4, 16))
    for i in range(4):
        codes[i, :i] = -1.0
    labels = np.array([0, 0, 1, 1])
    path = tmp_path / "self.codes"
    save_codes(pack_codes(codes, labels), path)
    return path


def test_eval_text_output(tmp_path, capsys):
    path = write_eval_codes(tmp_path)
    rc = main(["eval", str(path), str(path), "--max-rank", "3", "--exclude-self"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "rank_1 = 0.750000"
    assert lines[-1] == "map = 0.875000"


def test_eval_json_output(tmp_path, capsys):
    path = write_eval_codes(tmp_path)
    rc = main(
        ["eval", str(path), str(path), "--max-rank", "3", "--exclude-self", "--json"]
    )
    assert rc == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["map"] == pytest.approx(0.875)
    assert blob["num_queries"] == 4


def test_eval_camera_filter_reserved(tmp_path, capsys):
    path = write_eval_codes(tmp_path)
    rc = main(
        ["eval", str(path), str(path), "--exclude-self", "--camera-filter", "0"]
    )
    assert rc == 0
    assert "reserved" in capsys.readouterr().err


# --- bench ---


def test_bench_json(capsys):
    rc = main(["bench", "40", "2", "3", "--bits", "64", "--json"])
    assert rc == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["storage_ratio"] == 64.0
    assert blob["num_gallery"] == 40


def test_bench_env_thread_cap(monkeypatch, capsys):
    monkeypatch.setenv("DVHN_THREADS", "2")
    rc = main(["bench", "40", "2", "3", "--json"])
    assert rc == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["threads"] == 2
    monkeypatch.setenv("DVHN_THREADS", "x")
    assert main(["bench", "40", "2", "3"]) == 2


# --- selftest ---


def test_selftest_passes(capsys):
    rc = main(["selftest"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "selftest passed" in out
    for group in ("gradient", "classifier", "codes", "hamming", "metrics"):
        assert f"{group}: ok" in out


def test_selftest_perturbed_gradient_fails(capsys):
    rc = main(["selftest", "--perturb", "gradient"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "gradient: FAIL" in captured.out
    assert "selftest failed: gradient" in captured.err


# --- plumbing ---


def test_unknown_subcommand_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_installed_script_runs():
    exe = shutil.which("hashreid")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run(
        [exe, "bench", "10", "1", "3", "--json"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["num_gallery"] == 10
