"""Desk-scale directional experiment: NL vs NC vs completed-tensor accuracy.

Drives the tensor-completion package strictly through its public surfaces:
exported NPY tensors go in, the experiment CLI corrupts and completes them,
and this module scores the dumped completions.  Needs pretrained weights and
labeled images; with randomly initialized backbones every accuracy is chance
level and the NL/NC/TC ordering carries no signal.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

from .evaluate import evaluate_completed, write_flags
from .export import export_features
from .splits import build_split

DESK_SPLITS = {"vgg16": "block4_pool", "resnet34": "add_7"}


def _accuracy(flag_entries, method) -> float:
    rows = [e for e in flag_entries if e["method"] == method]
    if not rows:
        raise RuntimeError(f"no evaluated completions for method {method!r}")
    return 100.0 * sum(e["correct"] for e in rows) / len(rows)


def run_model_condition(model_name, weights_path, image_dir, work_dir,
                        n_images=50, trials=10, p_loss=0.30, seed=0,
                        methods=("none", "halrtc")) -> dict:
    """One model's NL / NC / TC accuracies at desk scale.

    Exports features for n_images, runs the completion experiment over
    `trials` loss realizations at `p_loss` dumping every completed tensor,
    scores the dump, and returns the three accuracies in percent.
    """
    work = Path(work_dir)
    feature_dir = work / f"{model_name}_features"
    dump_dir = work / f"{model_name}_completed"
    results_path = work / f"{model_name}_results.json"

    split = build_split(model_name, DESK_SPLITS[model_name], weights_path=weights_path)
    manifest = export_features(split, image_dir, feature_dir, limit=n_images,
                               weights_path=weights_path)

    cmd = [sys.executable, "-m", "tensorfill.cli", "run",
           "--model-dir", str(feature_dir),
           "--ploss", str(p_loss), "--trials", str(trials), "--seed", str(seed),
           "--dump-completed", str(dump_dir), "--out", str(results_path)]
    for m in methods:
        cmd += ["--method", m]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode not in (0, 3):
        raise RuntimeError(f"completion run failed ({proc.returncode}): {proc.stderr.strip()}")

    flags = evaluate_completed(manifest, dump_dir, split=split)
    write_flags(flags, work / f"{model_name}_flags.json")

    labeled = [e for e in manifest["entries"] if e["label"] >= 0]
    if not labeled:
        raise RuntimeError(f"no labeled images in {image_dir}; directional accuracy needs labels.json")
    nl = 100.0 * sum(e["nl_prediction"] == e["label"] for e in labeled) / len(labeled)
    return {
        "model": model_name,
        "mu_nl": nl,
        "mu_nc": _accuracy(flags["entries"], "none"),
        "mu_tc": _accuracy(flags["entries"], "halrtc"),
        "n_images": len(manifest["entries"]),
        "trials": trials,
        "p_loss": p_loss,
    }


def run_directional_check(pretrained_dir, image_dir, work_dir,
                          n_images=50, trials=10, p_loss=0.30) -> dict:
    """Both models' desk-scale conditions plus the directional verdicts."""
    pretrained = Path(pretrained_dir)
    out = {}
    for model_name, weights_file in (("resnet34", "resnet34.pth"), ("vgg16", "vgg16.pth")):
        weights_path = pretrained / weights_file
        if not weights_path.exists():
            raise FileNotFoundError(f"missing pretrained weights {weights_path}")
        out[model_name] = run_model_condition(model_name, weights_path, image_dir,
                                              work_dir, n_images, trials, p_loss)
    resnet, vgg = out["resnet34"], out["vgg16"]
    out["checks"] = {
        "resnet_nc_drops_30pts": resnet["mu_nl"] - resnet["mu_nc"] >= 30.0,
        "resnet_tc_within_8pts": resnet["mu_nl"] - resnet["mu_tc"] <= 8.0,
        "vgg_nc_within_6pts": vgg["mu_nl"] - vgg["mu_nc"] <= 6.0,
    }
    (Path(work_dir) / "directional_summary.json").write_text(
        json.dumps(out, indent=1) + "\n", encoding="utf-8")
    return out
