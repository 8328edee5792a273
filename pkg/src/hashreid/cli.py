"""Command line interface.

Exit codes: 0 on success, 1 when the selftest battery fails, 2 on bad
usage or bad input (argparse uses 2 for usage errors on its own).
"""

from __future__ import annotations

import argparse
import sys

from . import bench as bench_mod
from . import dataset, hamming, metrics, model, solver
from .errors import HashReidError
from .selftest import GROUPS, run_selftest

_TRAIN_OVERRIDES = (
    "seed",
    "bits",
    "alpha",
    "lr",
    "mu",
    "nu",
    "eta",
    "lambda_",
    "sigma",
    "inner_iters",
    "outer_iters",
    "p",
    "k1",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hashreid",
        description="Learn compact binary codes for re-identification and "
        "run Hamming-space retrieval over them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a code model on an embedding file")
    p_train.add_argument("embeddings", help="training embedding file")
    p_train.add_argument("checkpoint", help="output model file")
    p_train.add_argument("--config", help="flat key = value settings file")
    p_train.add_argument("--format", choices=("emb1", "csv"), default="emb1")
    p_train.add_argument(
        "--history", help="loss history output path (default: <checkpoint>.history)"
    )
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--bits", type=int)
    p_train.add_argument("--alpha", type=float, help="triplet margin")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--mu", type=float)
    p_train.add_argument("--nu", type=float)
    p_train.add_argument("--eta", type=float)
    p_train.add_argument("--lambda", dest="lambda_", type=float)
    p_train.add_argument("--sigma", type=float)
    p_train.add_argument("--inner-iters", dest="inner_iters", type=int)
    p_train.add_argument("--outer-iters", dest="outer_iters", type=int)
    p_train.add_argument("--p", type=int, help="identities per batch")
    p_train.add_argument("--k1", type=int, help="rows per identity per batch")

    p_encode = sub.add_parser("encode", help="binarize an embedding file")
    p_encode.add_argument("checkpoint")
    p_encode.add_argument("embeddings")
    p_encode.add_argument("codes", help="output code file")
    p_encode.add_argument("--format", choices=("emb1", "csv"), default="emb1")

    p_query = sub.add_parser("query", help="print nearest gallery items per query")
    p_query.add_argument("gallery_codes")
    p_query.add_argument("query_codes")
    p_query.add_argument("--top-k", dest="top_k", type=int, default=10)
    p_query.add_argument("--camera-filter", dest="camera_filter")

    p_eval = sub.add_parser("eval", help="score retrieval quality")
    p_eval.add_argument("gallery_codes")
    p_eval.add_argument("query_codes")
    p_eval.add_argument("--max-rank", dest="max_rank", type=int, default=20)
    p_eval.add_argument("--json", action="store_true")
    p_eval.add_argument(
        "--exclude-self",
        dest="exclude_self",
        action="store_true",
        help="drop the gallery item sharing each query's index",
    )
    p_eval.add_argument("--camera-filter", dest="camera_filter")

    p_bench = sub.add_parser("bench", help="time packed vs float full scans")
    p_bench.add_argument("n_gallery", type=int)
    p_bench.add_argument("n_query", type=int)
    p_bench.add_argument("repeats", type=int, nargs="?", default=5)
    p_bench.add_argument("--bits", type=int, default=64)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--json", action="store_true")

    p_self = sub.add_parser("selftest", help="run the built-in check battery")
    p_self.add_argument("--perturb", choices=GROUPS, help=argparse.SUPPRESS)

    return parser


def _load_embeddings(path: str, fmt: str, split: str) -> dataset.EmbeddingSet:
    if fmt == "csv":
        return dataset.load_embeddings_csv(path, split)
    return dataset.load_embeddings(path, split)


def cmd_train(args) -> int:
    overrides = {
        name: getattr(args, name)
        for name in _TRAIN_OVERRIDES
        if getattr(args, name) is not None
    }
    file_cfg = solver.parse_config_file(args.config) if args.config else {}
    cfg = solver.TrainConfig(**{**file_cfg, **overrides})
    dset = _load_embeddings(args.embeddings, args.format, "train")
    result = solver.train(dset, cfg)
    model.save_checkpoint(args.checkpoint, result.params, result.classifier)
    history_path = args.history or (args.checkpoint + ".history")
    with open(history_path, "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(
                f"{entry.step} {entry.losses.triplet:.10e} "
                f"{entry.losses.identity:.10e} {entry.losses.coupling:.10e} "
                f"{entry.ridge_after_codes:.10e} {entry.losses.total:.10e}\n"
            )
    print(f"trained {cfg.bits}-bit model on {dset.num_rows} rows, "
          f"{dset.num_ids} identities ({len(result.history)} outer iterations)")
    if result.history:
        last = result.history[-1]
        print(f"final losses: triplet {last.losses.triplet:.6f}, "
              f"identity {last.losses.identity:.6f}, "
              f"coupling {last.losses.coupling:.6f}, total {last.losses.total:.6f}")
    print(f"wrote {args.checkpoint} and {history_path}")
    return 0


def cmd_encode(args) -> int:
    params, _ = model.load_checkpoint(args.checkpoint)
    dset = _load_embeddings(args.embeddings, args.format, "gallery")
    if dset.dim != params.input_dim:
        print(
            f"error: checkpoint expects input dimension {params.input_dim}, "
            f"embeddings have {dset.dim}",
            file=sys.stderr,
        )
        return 2
    codes = hamming.encode_set(params, dset)
    hamming.save_codes(codes, args.codes)
    print(f"wrote {codes.num_items} codes of {codes.num_bits} bits to {args.codes}")
    return 0


def cmd_query(args) -> int:
    if args.camera_filter is not None:
        print("note: --camera-filter is reserved and has no effect", file=sys.stderr)
    gallery = hamming.load_codes(args.gallery_codes)
    queries = hamming.load_codes(args.query_codes)
    if gallery.num_bits != queries.num_bits:
        print(
            f"error: gallery codes have {gallery.num_bits} bits, "
            f"query codes have {queries.num_bits}",
            file=sys.stderr,
        )
        return 2
    for qi in range(queries.num_items):
        ranked = hamming.rank_gallery(
            queries.packed[qi], gallery, top_k=args.top_k, query_index=qi
        )
        pairs = " ".join(
            f"{idx}({dist})" for idx, dist in zip(ranked.indices, ranked.distances)
        )
        print(f"{qi}: {pairs}")
    return 0


def cmd_eval(args) -> int:
    if args.camera_filter is not None:
        print("note: --camera-filter is reserved and has no effect", file=sys.stderr)
    gallery = hamming.load_codes(args.gallery_codes)
    queries = hamming.load_codes(args.query_codes)
    report = metrics.evaluate(
        queries, gallery, max_rank=args.max_rank, exclude_self=args.exclude_self
    )
    print(metrics.report_json(report) if args.json else metrics.format_report(report))
    return 0


def cmd_bench(args) -> int:
    report = bench_mod.run_bench(
        args.bits,
        args.n_gallery,
        args.n_query,
        seed=args.seed,
        repeats=args.repeats,
        threads=hamming.scan_thread_cap(),
    )
    print(bench_mod.bench_json(report) if args.json else bench_mod.format_bench(report))
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(perturb=args.perturb)
    failed = [name for name, (ok, _) in results.items() if not ok]
    for name, (ok, detail) in results.items():
        print(f"{name}: {'ok' if ok else 'FAIL'} ({detail})")
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("selftest passed")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "encode": cmd_encode,
    "query": cmd_query,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except HashReidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
