"""Score completed tensors with the cloud sub-model and emit correctness flags.

The completed directory follows the experiment runner's dump layout:

    completed/
      p30/t0000/<method>/<source_id>.npy
      p30/t0000/<source_id>.mask.npy      (ignored here)

Flags are keyed (tensor_id, method, p_loss, trial_index) so the harness can
merge them back into its trial records; the "nl" section scores the intact
pipeline's predictions against the manifest labels.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
import torch

from .export import split_from_manifest
from .splits import SplitModel

FLAGS_SCHEMA_VERSION = 1

_P_DIR = re.compile(r"^p(\d+)$")
_T_DIR = re.compile(r"^t(\d+)$")


class EvaluationDataError(ValueError):
    """A completed tensor is missing or has the wrong shape for the split."""


def _to_batch(arr: np.ndarray) -> torch.Tensor:
    # H x W x C interchange layout -> (1, C, H, W)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).unsqueeze(0).float()


@torch.no_grad()
def predict_completed(split: SplitModel, arr: np.ndarray) -> int:
    return int(split.cloud(_to_batch(arr)).argmax(dim=1).item())


def iter_completed_files(completed_dir):
    """(p_loss, trial_index, method, source_id, path) for every dumped tensor."""
    root = Path(completed_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"completed directory {root} does not exist")
    for p_dir in sorted(root.iterdir()):
        m = _P_DIR.match(p_dir.name)
        if not m:
            continue
        p_loss = int(m.group(1)) / 100.0
        for t_dir in sorted(p_dir.iterdir()):
            tm = _T_DIR.match(t_dir.name)
            if not tm:
                continue
            trial = int(tm.group(1))
            for method_dir in sorted(d for d in t_dir.iterdir() if d.is_dir()):
                for tensor_path in sorted(method_dir.glob("*.npy")):
                    if tensor_path.name.endswith(".mask.npy"):
                        continue
                    yield p_loss, trial, method_dir.name, tensor_path.stem, tensor_path


@torch.no_grad()
def evaluate_completed(manifest: dict, completed_dir, split: SplitModel | None = None) -> dict:
    """Top-1 correctness flags for every completed tensor in the dump."""
    split = split or split_from_manifest(manifest)
    labels = {e["source_id"]: e["label"] for e in manifest["entries"]}
    expected_shape = None

    nl_flags = [{"tensor_id": e["source_id"],
                 "correct": bool(e["label"] >= 0 and e["nl_prediction"] == e["label"])}
                for e in manifest["entries"]]

    entries = []
    n_evaluated = 0
    for p_loss, trial, method, source_id, path in iter_completed_files(completed_dir):
        if source_id not in labels:
            continue
        arr = np.load(path)
        if arr.ndim != 3:
            raise EvaluationDataError(f"{path}: expected a 3-D feature tensor, got shape {arr.shape}")
        if expected_shape is None:
            probe = np.load(manifest["entries"][0]["tensor_path"])
            expected_shape = probe.shape
        if arr.shape != expected_shape:
            raise EvaluationDataError(
                f"{path}: shape {arr.shape} does not match the split layer's {expected_shape}")
        pred = predict_completed(split, arr)
        entries.append({
            "tensor_id": source_id,
            "method": method,
            "p_loss": p_loss,
            "trial_index": trial,
            "prediction": pred,
            "correct": bool(labels[source_id] >= 0 and pred == labels[source_id]),
        })
        n_evaluated += 1

    top1 = (100.0 * sum(e["correct"] for e in entries) / n_evaluated) if n_evaluated else None
    return {
        "schema_version": FLAGS_SCHEMA_VERSION,
        "model": manifest["model"],
        "split_layer": manifest["split_layer"],
        "nl": nl_flags,
        "entries": entries,
        "top1_percent": top1,
    }


def write_flags(flags: dict, path) -> None:
    Path(path).write_text(json.dumps(flags, indent=1) + "\n", encoding="utf-8")
