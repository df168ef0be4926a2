"""Split VGG16 / ResNet34 into edge and cloud sub-models.

Split layers use the Keras-style names the experiment protocol is written
in: "blockN_pool" for VGG16 and "add_N" (the N-th residual addition,
1-based) for ResNet34.  The edge sub-model ends at the named layer; the
cloud sub-model is everything after it.  Both are views over one set of
module instances, so edge followed by cloud reproduces the unsplit model's
op sequence exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
from torch import nn
from torchvision.models import resnet34, vgg16

logger = logging.getLogger(__name__)

MODEL_NAMES = ("vgg16", "resnet34")

# index of each pooling layer inside torchvision vgg16().features
_VGG_POOL_INDEX = {
    "block1_pool": 4,
    "block2_pool": 9,
    "block3_pool": 16,
    "block4_pool": 23,
    "block5_pool": 30,
}

_RESNET_LAYERS = ("layer1", "layer2", "layer3", "layer4")


class SplitConfigError(ValueError):
    """Unknown model or split layer; the message lists valid candidates."""


@dataclass
class SplitModel:
    model_name: str
    split_layer: str
    resolved_module: str
    full: nn.Module
    edge: nn.Module
    cloud: nn.Module
    edge_param_fraction: float


def _param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _build_backbone(model_name: str, weights_path=None, init_seed: int = 0) -> nn.Module:
    if model_name == "vgg16":
        factory = vgg16
    elif model_name == "resnet34":
        factory = resnet34
    else:
        raise SplitConfigError(f"unknown model {model_name!r}; choose one of {MODEL_NAMES}")
    torch.manual_seed(init_seed)
    model = factory(weights=None)
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def candidate_split_layers(model_name: str) -> list[str]:
    if model_name == "vgg16":
        return sorted(_VGG_POOL_INDEX)
    if model_name == "resnet34":
        n_blocks = sum(len(getattr(resnet34(weights=None), layer)) for layer in _RESNET_LAYERS)
        return [f"add_{k}" for k in range(1, n_blocks + 1)]
    raise SplitConfigError(f"unknown model {model_name!r}; choose one of {MODEL_NAMES}")


def _split_vgg(model: nn.Module, split_layer: str):
    if split_layer not in _VGG_POOL_INDEX:
        raise SplitConfigError(
            f"unknown split layer {split_layer!r} for vgg16; candidates: "
            f"{', '.join(sorted(_VGG_POOL_INDEX))}"
        )
    cut = _VGG_POOL_INDEX[split_layer] + 1
    edge = nn.Sequential(*model.features[:cut])
    cloud = nn.Sequential(*model.features[cut:], model.avgpool, nn.Flatten(1), model.classifier)
    return edge, cloud, f"features[:{cut}]"


def _resnet_add_points(model: nn.Module):
    """(name, edge module list, resolved label) for every residual addition."""
    stem = [model.conv1, model.bn1, model.relu, model.maxpool]
    points = []
    modules = list(stem)
    add_index = 0
    for layer_name in _RESNET_LAYERS:
        layer = getattr(model, layer_name)
        for block_index, block in enumerate(layer):
            add_index += 1
            modules = modules + [block]
            points.append((f"add_{add_index}", list(modules), f"{layer_name}[{block_index}]"))
    return points


def _split_resnet(model: nn.Module, split_layer: str):
    points = {name: (mods, label) for name, mods, label in _resnet_add_points(model)}
    if split_layer not in points:
        raise SplitConfigError(
            f"unknown split layer {split_layer!r} for resnet34; candidates: "
            f"{', '.join(points)}"
        )
    mods, label = points[split_layer]
    edge = nn.Sequential(*mods)
    n_edge_blocks = len(mods) - 4
    remaining = []
    seen = 0
    for layer_name in _RESNET_LAYERS:
        layer = getattr(model, layer_name)
        for block in layer:
            seen += 1
            if seen > n_edge_blocks:
                remaining.append(block)
    cloud = nn.Sequential(*remaining, model.avgpool, nn.Flatten(1), model.fc)
    return edge, cloud, f"through {label}"


def resolve_add_by_fraction(model_name: str, target_fraction: float) -> str:
    """The residual addition whose edge-side parameter fraction is nearest the target."""
    model = _build_backbone(model_name)
    total = _param_count(model)
    best_name, best_gap = None, float("inf")
    for name, mods, _ in _resnet_add_points(model):
        frac = sum(_param_count(m) for m in mods) / total
        gap = abs(frac - target_fraction)
        if gap < best_gap:
            best_name, best_gap = name, gap
    return best_name


def build_split(model_name: str, split_layer: str, weights_path=None,
                init_seed: int = 0) -> SplitModel:
    """Construct the edge/cloud split; random init is seeded for reproducibility."""
    model = _build_backbone(model_name, weights_path, init_seed)
    if model_name == "vgg16":
        edge, cloud, resolved = _split_vgg(model, split_layer)
    else:
        edge, cloud, resolved = _split_resnet(model, split_layer)
    fraction = _param_count(edge) / _param_count(model)
    logger.info("%s split at %s -> %s, edge holds %.2f%% of parameters",
                model_name, split_layer, resolved, 100.0 * fraction)
    return SplitModel(
        model_name=model_name,
        split_layer=split_layer,
        resolved_module=resolved,
        full=model,
        edge=edge,
        cloud=cloud,
        edge_param_fraction=fraction,
    )


@torch.no_grad()
def full_logits(split: SplitModel, batch: torch.Tensor) -> torch.Tensor:
    return split.full(batch)


@torch.no_grad()
def composed_logits(split: SplitModel, batch: torch.Tensor) -> torch.Tensor:
    return split.cloud(split.edge(batch))
