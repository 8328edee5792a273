"""Run a frozen backbone over a manifest and write the embedding file.

Images are decoded with PIL, normalized with the standard ImageNet eval
transform, and pushed through the backbone in manifest order. A file
that fails to decode is skipped with a warning and recorded in a sidecar
JSON report next to the output; only the decodable rows are written. If
nothing survives, no output is written at all.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import transforms

from .backbone import build_backbone, feature_width
from .emb1 import write_embeddings
from .errors import ManifestError, NothingExtractedError
from .manifest import ExtractionManifest

_PREPROCESS = transforms.Compose(
    [
        transforms.Resize(256),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(
            mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
        ),
    ]
)


@dataclass(frozen=True)
class ExtractionReport:
    output_path: str
    num_written: int
    feature_dim: int
    skipped: tuple[str, ...]


def _decode(path: str) -> torch.Tensor | None:
    try:
        with Image.open(path) as img:
            return _PREPROCESS(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        warnings.warn(f"skipping undecodable image {path}: {exc}", stacklevel=2)
        return None


def run_extraction(
    manifest: ExtractionManifest,
    out_path,
    weights: str = "random",
    seed: int = 0,
) -> ExtractionReport:
    """Extract features for every decodable image and write them out.

    Deterministic for a fixed manifest, weights choice and seed: the
    backbone is in eval mode and rows follow manifest order exactly.
    """
    width = feature_width(manifest.backbone)
    if manifest.out_dim is not None and manifest.out_dim != width:
        raise ManifestError(
            f"manifest declares {manifest.out_dim}-dim output but "
            f"{manifest.backbone} produces {width}"
        )
    model = build_backbone(manifest.backbone, weights=weights, seed=seed)

    kept_rows: list[np.ndarray] = []
    kept_labels: list[int] = []
    skipped: list[str] = []
    pending: list[torch.Tensor] = []
    pending_labels: list[int] = []

    def flush():
        if not pending:
            return
        with torch.no_grad():
            feats = model(torch.stack(pending))
        kept_rows.append(feats.numpy().astype(np.float32))
        kept_labels.extend(pending_labels)
        pending.clear()
        pending_labels.clear()

    for path, label in zip(manifest.image_paths, manifest.labels):
        tensor = _decode(path)
        if tensor is None:
            skipped.append(path)
            continue
        pending.append(tensor)
        pending_labels.append(label)
        if len(pending) == manifest.batch_size:
            flush()
    flush()

    out_path = Path(out_path)
    report_path = out_path.with_name(out_path.name + ".report.json")
    report = ExtractionReport(
        str(out_path), len(kept_labels), width, tuple(skipped)
    )
    with open(report_path, "w") as fh:
        json.dump(
            {
                "output": report.output_path,
                "written": report.num_written,
                "feature_dim": report.feature_dim,
                "skipped": list(report.skipped),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    if not kept_labels:
        raise NothingExtractedError(
            f"all {manifest.num_images} listed images were undecodable"
        )
    write_embeddings(np.concatenate(kept_rows, axis=0), kept_labels, out_path)
    return report
