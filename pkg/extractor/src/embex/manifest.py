"""Image listings: where the files are and which identity each one shows.

Two sources are supported. A directory tree uses one subdirectory per
identity (labels are assigned 0..C-1 over the sorted subdirectory names),
and a two-column CSV names each file and its integer label directly.
Decodability is not checked here; a listed file that later fails to open
is skipped at extraction time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError


@dataclass(frozen=True)
class ExtractionManifest:
    """An ordered list of images with labels plus the inference settings.

    out_dim, when set, declares the feature width the caller expects; the
    backbone's actual width is checked against it before any work runs.
    """

    image_paths: tuple[str, ...]
    labels: tuple[int, ...]
    backbone: str = "resnet18"
    out_dim: int | None = None
    batch_size: int = 16

    def __post_init__(self):
        if not self.image_paths:
            raise ManifestError("manifest lists no images")
        if len(self.image_paths) != len(self.labels):
            raise ManifestError(
                f"{len(self.image_paths)} paths but {len(self.labels)} labels"
            )
        for label in self.labels:
            if label < 0:
                raise ManifestError(f"labels must be non-negative, got {label}")
        for path in self.image_paths:
            if not Path(path).is_file():
                raise ManifestError(f"listed file does not exist: {path}")
        if self.out_dim is not None and self.out_dim < 1:
            raise ManifestError("out_dim must be positive")
        if self.batch_size < 1:
            raise ManifestError("batch_size must be at least 1")

    @property
    def num_images(self) -> int:
        return len(self.image_paths)


def scan_image_tree(root, **settings) -> ExtractionManifest:
    """Build a manifest from one-subdirectory-per-identity layout.

    Subdirectories are sorted by name and numbered 0..C-1; files inside
    each are sorted too, so the listing is stable across runs. Dotfiles
    are ignored.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"not a directory: {root}")
    paths: list[str] = []
    labels: list[int] = []
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    for label, subdir in enumerate(subdirs):
        for item in sorted(subdir.iterdir()):
            if item.is_file() and not item.name.startswith("."):
                paths.append(str(item))
                labels.append(label)
    if not paths:
        raise ManifestError(f"no identity subdirectories with files under {root}")
    return ExtractionManifest(tuple(paths), tuple(labels), **settings)


def read_csv_manifest(path, **settings) -> ExtractionManifest:
    """Build a manifest from a path,label CSV.

    Relative image paths are resolved against the CSV's own directory.
    """
    path = Path(path)
    base = path.parent
    paths: list[str] = []
    labels: list[int] = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 2:
                    raise ManifestError(
                        f"{path}:{lineno}: expected two columns, got {len(row)}"
                    )
                image, raw_label = row[0].strip(), row[1].strip()
                try:
                    label = int(raw_label)
                except ValueError:
                    raise ManifestError(
                        f"{path}:{lineno}: label {raw_label!r} is not an integer"
                    ) from None
                resolved = Path(image)
                if not resolved.is_absolute():
                    resolved = base / resolved
                paths.append(str(resolved))
                labels.append(label)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not paths:
        raise ManifestError(f"manifest {path} lists no images")
    return ExtractionManifest(tuple(paths), tuple(labels), **settings)
