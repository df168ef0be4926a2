"""bridge CLI: export split-model features, score completed tensors."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .evaluate import EvaluationDataError, evaluate_completed, write_flags
from .export import export_features, split_from_manifest
from .splits import MODEL_NAMES, SplitConfigError, build_split


def _build_parser():
    parser = argparse.ArgumentParser(prog="bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="export edge-side feature tensors for a directory of images")
    exp.add_argument("--model", required=True, choices=MODEL_NAMES)
    exp.add_argument("--split", required=True, help="split layer, e.g. block4_pool or add_7")
    exp.add_argument("--images", required=True, help="image directory (labels.json optional)")
    exp.add_argument("--out", required=True, help="output directory for tensors + manifest.json")
    exp.add_argument("--limit", type=int, help="export at most N images")
    exp.add_argument("--weights", help="state-dict path; omitted means seeded random init")
    exp.add_argument("--init-seed", type=int, default=0)

    ev = sub.add_parser("eval", help="score completed tensors against the manifest labels")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--completed", required=True, help="experiment dump directory")
    ev.add_argument("--out", required=True, help="flags JSON path")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export":
            split = build_split(args.model, args.split, weights_path=args.weights,
                                init_seed=args.init_seed)
            manifest = export_features(split, args.images, args.out, limit=args.limit,
                                       weights_path=args.weights, init_seed=args.init_seed)
            print(f"exported {len(manifest['entries'])} tensors to {args.out} "
                  f"(edge holds {100 * manifest['edge_param_fraction']:.2f}% of parameters)")
        else:
            manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            flags = evaluate_completed(manifest, args.completed, split=split_from_manifest(manifest))
            write_flags(flags, args.out)
            top1 = flags["top1_percent"]
            print(f"wrote {args.out}: {len(flags['entries'])} completions scored"
                  + (f", top-1 {top1:.2f}%" if top1 is not None else ""))
        return 0
    except SplitConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, EvaluationDataError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
