"""Frozen convolutional feature extractors.

Each backbone is a torchvision ResNet with the classification head cut
off, leaving the global-average-pooled vector. Models are always put in
eval mode with gradients disabled; this package never trains anything.

Weights come from one of three places: "random" (seeded initialization,
the default, and the only option that works offline), "pretrained"
(torchvision's published weights, downloaded on first use), or a local
state-dict file path.
"""

from __future__ import annotations

import torch
import torchvision.models

from .errors import BackboneError

_BUILDERS = {
    "resnet18": (torchvision.models.resnet18, 512),
    "resnet34": (torchvision.models.resnet34, 512),
    "resnet50": (torchvision.models.resnet50, 2048),
}


def backbone_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def feature_width(name: str) -> int:
    """Output dimension of a backbone's pooled features."""
    try:
        return _BUILDERS[name][1]
    except KeyError:
        raise BackboneError(
            f"unknown backbone {name!r}; available: {', '.join(backbone_names())}"
        ) from None


def build_backbone(name: str, weights: str = "random", seed: int = 0) -> torch.nn.Module:
    """Construct a frozen eval-mode feature extractor.

    The returned module maps a (B, 3, H, W) float batch to (B, M) pooled
    features, M = feature_width(name).
    """
    try:
        builder, _ = _BUILDERS[name]
    except KeyError:
        raise BackboneError(
            f"unknown backbone {name!r}; available: {', '.join(backbone_names())}"
        ) from None
    if weights == "random":
        torch.manual_seed(seed)
        model = builder(weights=None)
    elif weights == "pretrained":
        try:
            model = builder(weights="DEFAULT")
        except Exception as exc:
            raise BackboneError(
                f"could not fetch pretrained weights for {name}: {exc}"
            ) from exc
    else:
        model = builder(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        except Exception as exc:
            raise BackboneError(f"could not load weights from {weights}: {exc}") from exc
    # everything up to the pooled vector; drop the class-logit layer
    trunk = torch.nn.Sequential(
        *list(model.children())[:-1], torch.nn.Flatten(start_dim=1)
    )
    trunk.eval()
    trunk.requires_grad_(False)
    return trunk
