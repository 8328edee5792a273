"""Command-line entry: embex SOURCE OUTPUT [options].

SOURCE is either an identity-per-subdirectory image tree or, with --csv,
a two-column path,label manifest file. Exit codes: 0 on success (even if
some images were skipped), 1 when every image was undecodable, 2 on bad
input or usage.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from .backbone import backbone_names
from .errors import EmbexError, NothingExtractedError
from .extract import run_extraction
from .manifest import read_csv_manifest, scan_image_tree


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embex",
        description="export image features to a binary embedding file",
    )
    parser.add_argument("source", help="image tree root, or a CSV manifest with --csv")
    parser.add_argument("output", help="embedding file to write")
    parser.add_argument(
        "--csv", action="store_true", help="treat SOURCE as a path,label CSV"
    )
    parser.add_argument(
        "--backbone", default="resnet18", choices=backbone_names()
    )
    parser.add_argument(
        "--weights",
        default="random",
        help="'random' (seeded, offline), 'pretrained', or a state-dict path",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for random weights")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    parser.add_argument(
        "--dim", type=int, help="expected feature width; checked against the backbone"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    settings = dict(
        backbone=args.backbone, out_dim=args.dim, batch_size=args.batch_size
    )
    try:
        if args.csv:
            manifest = read_csv_manifest(args.source, **settings)
        else:
            manifest = scan_image_tree(args.source, **settings)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                report = run_extraction(
                    manifest, args.output, weights=args.weights, seed=args.seed
                )
            finally:
                for entry in caught:
                    print(f"warning: {entry.message}", file=sys.stderr)
    except NothingExtractedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EmbexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {report.num_written} x {report.feature_dim} features to "
        f"{report.output_path} ({len(report.skipped)} skipped)"
    )
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
