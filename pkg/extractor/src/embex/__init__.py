"""Image-folder feature extraction for the binary-code trainer.

Walks an image tree (or a CSV manifest), runs a frozen convolutional
backbone in eval mode, and writes the pooled features with labels in the
binary embedding format the companion training CLI reads.
"""

from .backbone import backbone_names, build_backbone, feature_width
from .emb1 import write_embeddings
from .errors import (
    BackboneError,
    EmbexError,
    ManifestError,
    NothingExtractedError,
)
from .extract import ExtractionReport, run_extraction
from .manifest import ExtractionManifest, read_csv_manifest, scan_image_tree

__all__ = [
    "BackboneError",
    "EmbexError",
    "ExtractionManifest",
    "ExtractionReport",
    "ManifestError",
    "NothingExtractedError",
    "backbone_names",
    "build_backbone",
    "feature_width",
    "read_csv_manifest",
    "run_extraction",
    "scan_image_tree",
    "write_embeddings",
]
