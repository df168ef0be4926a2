"""Export edge-side feature tensors plus the evaluation manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import transforms

from .splits import SplitModel, build_split

MANIFEST_SCHEMA_VERSION = 1
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")

# standard ImageNet preprocessing; absolute accuracies depend on this choice
PREPROCESS = transforms.Compose([
    transforms.Resize(256),
    transforms.CenterCrop(224),
    transforms.ToTensor(),
    transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
])


def list_images(image_dir) -> list[Path]:
    d = Path(image_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"image directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_labels(image_dir) -> dict:
    """Optional labels.json: image filename -> integer class."""
    path = Path(image_dir) / "labels.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _to_feature_array(activation: torch.Tensor) -> np.ndarray:
    # (1, C, H, W) -> H x W x C float32, the interchange layout
    return activation.squeeze(0).permute(1, 2, 0).contiguous().numpy().astype(np.float32)


@torch.no_grad()
def export_features(split: SplitModel, image_dir, out_dir, limit=None,
                    weights_path=None, init_seed=0) -> dict:
    """Run the edge sub-model over images, writing one NPY tensor per image.

    The manifest records each image's label (-1 when labels.json is absent),
    the exported tensor path, and the prediction of the unsplit pipeline on
    the intact input.  Weight provenance (a state-dict path or the init
    seed) is recorded so evaluation can rebuild the identical cloud model.
    """
    images = list_images(image_dir)
    if limit is not None:
        images = images[:limit]
    if not images:
        raise FileNotFoundError(f"no images found in {image_dir}")
    labels = load_labels(image_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    for path in images:
        image = Image.open(path).convert("RGB")
        batch = PREPROCESS(image).unsqueeze(0)
        feature = split.edge(batch)
        logits = split.cloud(feature)
        tensor_path = out / f"{path.stem}.npy"
        np.save(tensor_path, _to_feature_array(feature))
        entries.append({
            "source_id": path.stem,
            "label": int(labels.get(path.name, labels.get(path.stem, -1))),
            "tensor_path": str(tensor_path),
            "nl_prediction": int(logits.argmax(dim=1).item()),
        })

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "model": split.model_name,
        "split_layer": split.split_layer,
        "resolved_module": split.resolved_module,
        "edge_param_fraction": split.edge_param_fraction,
        "weights_path": str(weights_path) if weights_path else None,
        "init_seed": init_seed,
        "entries": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest


def split_from_manifest(manifest: dict) -> SplitModel:
    return build_split(manifest["model"], manifest["split_layer"],
                       weights_path=manifest.get("weights_path"),
                       init_seed=manifest.get("init_seed", 0))
