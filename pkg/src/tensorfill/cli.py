"""Command-line surface: run / complete / train-altec / calibrate / report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial trial failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .channel import PacketizationScheme
from .completion import (
    FCPParams,
    HaLRTCParams,
    IterationBudget,
    MethodConfig,
    SiLRTCParams,
    complete,
    load_altec_weights,
    save_altec_weights,
    train_altec,
)
from .config import parse_config_file, resolve_options
from .exceptions import (
    CalibrationError,
    ConfigError,
    ContractViolation,
    NpyFormatError,
    TensorFillError,
    WeightsFormatError,
)
from .harness import (
    ExperimentSpec,
    build_results_document,
    calibrate_speed_match,
    merge_correctness_flags,
    read_results_document,
    records_from_document,
    render_table_csv,
    run_experiment,
    spec_from_document,
    write_results_document,
)
from .npyio import load_tensor_dir, read_array_file, read_mask_file, write_array_file

USAGE_ERROR = 1
DATA_ERROR = 2
PARTIAL_FAILURE = 3

_SCHEMES = {"per-channel-row": "per_channel_row", "cross-channel-row": "cross_channel_row"}
_PROTOCOLS = {"default": "default", "speed-matched": "speed_matched"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tensorfill", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tensorfill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a packet-loss completion experiment")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--model-dir", help="directory of clean feature tensors (.npy)")
    run.add_argument("--method", action="append",
                     choices=["silrtc", "halrtc", "fcp", "altec", "none"],
                     help="completion method (repeatable)")
    run.add_argument("--ploss", action="append", type=float, help="loss probability (repeatable)")
    run.add_argument("--trials", type=int, help="loss realizations per tensor")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--protocol", choices=sorted(_PROTOCOLS))
    run.add_argument("--scheme", choices=sorted(_SCHEMES))
    run.add_argument("--rows-per-packet", type=int)
    run.add_argument("--weights", help="trained ALTeC weights file")
    run.add_argument("--out", help="results document path")
    run.add_argument("--format", choices=["json", "csv"])
    run.add_argument("--dump-completed", help="directory for per-trial completed tensors")
    run.add_argument("--flags", help="correctness flags JSON from a downstream evaluator")

    comp = sub.add_parser("complete", help="complete one damaged tensor")
    comp.add_argument("--method", required=True,
                      choices=["silrtc", "halrtc", "fcp", "altec", "none"])
    comp.add_argument("--input", required=True, help="damaged tensor (.npy)")
    comp.add_argument("--mask", required=True, help="observation mask (.npy, u1)")
    comp.add_argument("--out", required=True, help="output tensor path")
    comp.add_argument("--weights", help="ALTeC weights file")
    comp.add_argument("--fixed-iters", type=int, help="fixed iteration budget")
    comp.add_argument("--rank", type=int, help="CP rank (fcp)")
    comp.add_argument("--smooth-lambda", type=float, help="spatial fusion weight (fcp)")
    comp.add_argument("--sparse", action="store_true", help="clamp negatives (fcp)")
    comp.add_argument("--init-seed", type=int, default=0, help="factor init seed (fcp)")
    comp.add_argument("--tol", type=float, help="convergence tolerance")
    comp.add_argument("--max-iters", type=int, help="iteration cap for until-convergence")

    train = sub.add_parser("train-altec", help="fit ALTeC weights on clean tensors")
    train.add_argument("--model-dir", required=True)
    train.add_argument("--ridge-lambda", type=float, default=1e-6)
    train.add_argument("--out", required=True)

    cal = sub.add_parser("calibrate", help="compute a speed-matched iteration budget")
    cal.add_argument("--method", required=True, choices=["silrtc", "halrtc", "fcp"])
    cal.add_argument("--input", help="probe tensor (.npy); defaults to first of --model-dir")
    cal.add_argument("--model-dir")
    cal.add_argument("--weights", required=True, help="ALTeC weights (the speed reference)")
    cal.add_argument("--ploss", type=float, default=0.15)
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--probes", type=int, default=5)
    cal.add_argument("--rank", type=int, help="CP rank (fcp)")

    rep = sub.add_parser("report", help="render results documents as a table")
    rep.add_argument("--in", dest="inputs", action="append", required=True,
                     help="results document (repeatable: default + speed-matched)")
    rep.add_argument("--out", help="output path (stdout when omitted)")
    rep.add_argument("--format", choices=["csv", "json"], default="csv")
    rep.add_argument("--flags", help="correctness flags JSON to merge before summarizing")
    return parser


def _method_configs(names, weights_path, fcp_overrides=None):
    configs = []
    weights = None
    for name in names:
        if name == "altec":
            if weights_path is None:
                raise ConfigError("method 'altec' requires --weights")
            weights = weights or load_altec_weights(weights_path)
            configs.append(MethodConfig("altec", weights=weights))
        elif name == "fcp" and fcp_overrides:
            configs.append(MethodConfig("fcp", params=FCPParams(**fcp_overrides)))
        else:
            configs.append(MethodConfig(name))
    return configs


def _cmd_run(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    cli_values = {
        "model_dir": args.model_dir,
        "methods": ",".join(args.method) if args.method else None,
        "ploss": ",".join(str(p) for p in args.ploss) if args.ploss else None,
        "trials": str(args.trials) if args.trials is not None else None,
        "seed": str(args.seed) if args.seed is not None else None,
        "protocol": args.protocol,
        "scheme": args.scheme,
        "rows_per_packet": str(args.rows_per_packet) if args.rows_per_packet is not None else None,
        "weights": args.weights,
        "out": args.out,
        "format": args.format,
        "dump_dir": args.dump_completed,
    }
    opts = resolve_options(cli_values, file_values)
    if opts["model_dir"] is None:
        raise ConfigError("run requires --model-dir (or model_dir in the config file)")
    if opts["out"] is None:
        raise ConfigError("run requires --out (or out in the config file)")

    try:
        trials = int(opts["trials"])
        seed = int(opts["seed"])
        rows_per_packet = int(opts["rows_per_packet"])
        grid = tuple(float(p) for p in opts["ploss"].split(","))
    except ValueError as exc:
        raise ConfigError(f"bad numeric option: {exc}") from None
    protocol = _PROTOCOLS.get(opts["protocol"], opts["protocol"])
    grouping = _SCHEMES.get(opts["scheme"], opts["scheme"])
    names = [m.strip() for m in opts["methods"].split(",") if m.strip()]

    spec = ExperimentSpec(
        methods=tuple(_method_configs(names, opts["weights"])),
        tensor_dir=opts["model_dir"],
        p_loss_grid=grid,
        trials_per_tensor=trials,
        master_seed=seed,
        protocol=protocol,
        scheme=PacketizationScheme(rows_per_packet=rows_per_packet, grouping=grouping),
    )
    tensors = load_tensor_dir(opts["model_dir"])
    records = run_experiment(spec, tensors, dump_dir=opts["dump_dir"])

    nl_accuracy = None
    if args.flags:
        flags = json.loads(Path(args.flags).read_text(encoding="utf-8"))
        records = merge_correctness_flags(records, flags)
        nl_flags = [bool(e["correct"]) for e in flags.get("nl", [])]
        if nl_flags:
            nl_accuracy = 100.0 * sum(nl_flags) / len(nl_flags)

    doc = build_results_document(spec, records, nl_accuracy)
    if opts["format"] == "csv":
        Path(opts["out"]).write_text(render_table_csv([doc]), encoding="utf-8")
    else:
        write_results_document(doc, opts["out"])
    print(f"wrote {opts['out']}: {len(records)} records, {doc['failed_trials']} failed")
    return PARTIAL_FAILURE if doc["failed_trials"] else 0


def _cmd_complete(args) -> int:
    tensor = read_array_file(args.input)
    mask = read_mask_file(args.mask)
    params = None
    if args.method == "silrtc":
        kwargs = {}
        if args.tol is not None:
            kwargs["tol"] = args.tol
        if args.max_iters is not None:
            kwargs["max_iters"] = args.max_iters
        params = SiLRTCParams(**kwargs)
    elif args.method == "halrtc":
        kwargs = {}
        if args.tol is not None:
            kwargs["tol"] = args.tol
        if args.max_iters is not None:
            kwargs["max_iters"] = args.max_iters
        params = HaLRTCParams(**kwargs)
    elif args.method == "fcp":
        kwargs = {"init_seed": args.init_seed, "sparse_variant": args.sparse}
        if args.rank is not None:
            kwargs["rank"] = args.rank
        if args.smooth_lambda is not None:
            kwargs["smooth_lambda"] = args.smooth_lambda
        if args.tol is not None:
            kwargs["tol"] = args.tol
        if args.max_iters is not None:
            kwargs["max_sweeps"] = args.max_iters
        params = FCPParams(**kwargs)

    weights = load_altec_weights(args.weights) if args.weights else None
    cfg = MethodConfig(args.method, params=params, weights=weights)
    budget = IterationBudget.fixed(args.fixed_iters) if args.fixed_iters else None
    result = complete(tensor, mask, cfg, budget)
    write_array_file(result.tensor, args.out)
    print(f"wrote {args.out} ({result.iterations} iterations)")
    return 0


def _cmd_train_altec(args) -> int:
    tensors = [t for _, t in load_tensor_dir(args.model_dir)]
    weights = train_altec(tensors, ridge_lambda=args.ridge_lambda)
    save_altec_weights(weights, args.out)
    print(f"wrote {args.out} ({weights.channels} channels)")
    return 0


def _cmd_calibrate(args) -> int:
    if args.input:
        probe = read_array_file(args.input)
    elif args.model_dir:
        probe = load_tensor_dir(args.model_dir)[0][1]
    else:
        raise ConfigError("calibrate requires --input or --model-dir")
    weights = load_altec_weights(args.weights)
    reference = MethodConfig("altec", weights=weights)
    params = FCPParams(rank=args.rank) if (args.method == "fcp" and args.rank) else None
    target = MethodConfig(args.method, params=params)
    budget = calibrate_speed_match(reference, target, probe, p_loss=args.ploss,
                                   seed=args.seed, n_probes=args.probes)
    print(json.dumps({"mode": budget.mode, "iters": budget.iters,
                      "reference": "altec", "target": args.method}))
    return 0


def _cmd_report(args) -> int:
    docs = [read_results_document(p) for p in args.inputs]
    if args.flags:
        flags = json.loads(Path(args.flags).read_text(encoding="utf-8"))
        nl_flags = [bool(e["correct"]) for e in flags.get("nl", [])]
        nl_accuracy = 100.0 * sum(nl_flags) / len(nl_flags) if nl_flags else None
        rebuilt = []
        for doc in docs:
            records = merge_correctness_flags(records_from_document(doc), flags)
            rebuilt.append(build_results_document(spec_from_document(doc), records, nl_accuracy))
        docs = rebuilt
    if args.format == "json":
        text = json.dumps(docs if len(docs) > 1 else docs[0], indent=1) + "\n"
    else:
        text = render_table_csv(docs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "complete": _cmd_complete,
    "train-altec": _cmd_train_altec,
    "calibrate": _cmd_calibrate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, _UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (NpyFormatError, WeightsFormatError, ContractViolation, CalibrationError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except TensorFillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
