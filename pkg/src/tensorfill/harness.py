"""Monte-Carlo experiment protocol and statistical comparison.

One *trial* is one loss realization applied to every ingested tensor; all
methods inside a (tensor, loss rate, trial) cell see the identical mask so
comparisons are paired.  Per-trial statistics aggregate over the tensor
set, which is the sampling unit the summary means and deviations (and the
Welch tests) are computed over.

Without a downstream classifier the native per-trial metric is missing-entry
MSE, reported as PSNR; accuracy-mode summaries appear when correctness flags
are merged from an external evaluator.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc

from .channel import ChannelConfig, PacketizationScheme, apply_loss, derive_seed, draw_loss, packet_count
from .completion import IterationBudget, MethodConfig, complete
from .core import FeatureTensor, masked_mse
from .exceptions import CalibrationError, ContractViolation
from .npyio import write_array_file, write_mask_file

__all__ = [
    "ExperimentSpec",
    "TrialRecord",
    "AccuracySummary",
    "WelchResult",
    "run_experiment",
    "welch_t_test",
    "declare_winner",
    "summary_stats",
    "summarize",
    "trial_samples",
    "calibrate_speed_match",
    "budget_from_timings",
    "build_results_document",
    "render_table_csv",
    "format_cell",
    "psnr_from_mse",
]

RESULTS_SCHEMA_VERSION = 1
DEFAULT_P_LOSS_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple
    tensor_dir: Optional[str] = None
    p_loss_grid: tuple = DEFAULT_P_LOSS_GRID
    trials_per_tensor: int = 100
    master_seed: int = 0
    protocol: str = "default"  # or "speed_matched"
    scheme: PacketizationScheme = field(default_factory=PacketizationScheme)

    def __post_init__(self):
        if not self.methods:
            raise ContractViolation("at least one method config is required")
        for p in self.p_loss_grid:
            if not (0.0 < p <= 1.0):
                raise ContractViolation(f"p_loss values must be in (0, 1], got {p}")
        if self.trials_per_tensor < 1:
            raise ContractViolation(f"trials_per_tensor must be >= 1, got {self.trials_per_tensor}")
        if self.protocol not in ("default", "speed_matched"):
            raise ContractViolation(f"protocol must be 'default' or 'speed_matched', got {self.protocol!r}")


@dataclass
class TrialRecord:
    tensor_id: str
    method: str
    p_loss: float
    trial_index: int
    missing_mse: float
    psnr: Optional[float]
    observed_count: int
    missing_count: int
    wall_time_ms: float
    iterations: int = 0
    failed: bool = False
    error: Optional[str] = None
    correct_nc: Optional[bool] = None
    correct_tc: Optional[bool] = None
    completed_path: Optional[str] = None


@dataclass(frozen=True)
class AccuracySummary:
    method: str
    p_loss: float
    mode: str  # "accuracy" (percent correct) or "psnr" (dB over missing entries)
    mu_nl: Optional[float]
    mu_nc: Optional[float]
    mu_tc: Optional[float]
    sigma_nc: Optional[float]
    sigma_tc: Optional[float]
    n_samples: int


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    dof: float
    p_value: float
    significant_at_95: bool
    degenerate: bool = False


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-sample t-test with unequal variances (Welch-Satterthwaite dof).

    Two-sided p-value from the Student-t survival function via the
    regularized incomplete beta function.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ContractViolation("welch_t_test needs at least two samples per group")
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1)) / a.size
    vb = float(b.var(ddof=1)) / b.size
    pooled = va + vb
    if pooled == 0.0:
        if ma == mb:
            return WelchResult(t_stat=0.0, dof=float(a.size + b.size - 2), p_value=1.0,
                               significant_at_95=False)
        return WelchResult(t_stat=math.inf if ma > mb else -math.inf,
                           dof=float(a.size + b.size - 2), p_value=0.0,
                           significant_at_95=True, degenerate=True)
    t = (ma - mb) / math.sqrt(pooled)
    dof = pooled * pooled / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return WelchResult(t_stat=t, dof=dof, p_value=p, significant_at_95=p < 0.05)


def declare_winner(samples_by_method: dict, alpha: float = 0.05) -> Optional[str]:
    """The method with the highest mean, iff it beats every rival at level alpha."""
    if len(samples_by_method) < 2:
        raise ContractViolation("declare_winner needs at least two methods")
    for name, values in samples_by_method.items():
        if values is None or len(values) < 2:
            raise ContractViolation(f"method {name!r} is missing its sample list")
    best = max(sorted(samples_by_method), key=lambda k: float(np.mean(samples_by_method[k])))
    best_mean = float(np.mean(samples_by_method[best]))
    for name, values in samples_by_method.items():
        if name == best:
            continue
        res = welch_t_test(samples_by_method[best], values)
        if res.p_value >= alpha or best_mean <= float(np.mean(values)):
            return None
    return best


def summary_stats(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and sample standard deviation (n-1 denominator)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ContractViolation("summary_stats needs a non-empty sample")
    # loss-free trials carry infinite PSNR; the mean/std stay inf/nan and
    # serialize as nulls, so just keep numpy quiet about the arithmetic
    with np.errstate(invalid="ignore"):
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def psnr_from_mse(mse: float, peak: float) -> float:
    """PSNR in dB; infinite when the error is zero."""
    if mse <= 0.0:
        return math.inf
    if peak <= 0.0:
        return -math.inf
    return 10.0 * math.log10(peak * peak / mse)


def trial_samples(records: Sequence[TrialRecord], method: str, p_loss: float,
                  metric: str = "psnr") -> list[float]:
    """One sample per trial: the metric averaged over the tensor set.

    ``metric`` is "psnr", "missing_mse" or "accuracy" (fraction of
    correct_tc flags, in percent).  Failed records are excluded.
    """
    by_trial: dict[int, list[float]] = {}
    for r in records:
        if r.failed or r.method != method or r.p_loss != p_loss:
            continue
        if metric == "psnr":
            value = r.psnr if r.psnr is not None else math.inf
        elif metric == "missing_mse":
            value = r.missing_mse
        elif metric == "accuracy":
            if r.correct_tc is None:
                continue
            value = 100.0 * float(r.correct_tc)
        else:
            raise ContractViolation(f"unknown metric {metric!r}")
        by_trial.setdefault(r.trial_index, []).append(value)
    return [float(np.mean(v)) for _, v in sorted(by_trial.items())]


def summarize(records: Sequence[TrialRecord], method: str, p_loss: float,
              nl_accuracy: Optional[float] = None) -> AccuracySummary:
    """Table-row summary for one (method, p_loss) group.

    Accuracy mode kicks in when the records carry correctness flags;
    otherwise the five slots hold per-trial missing-entry PSNR statistics
    (mu_nl is undefined then: no loss means no missing entries).
    """
    group = [r for r in records if r.method == method and r.p_loss == p_loss and not r.failed]
    if not group:
        raise ContractViolation(f"no records for method {method!r} at p_loss {p_loss}")
    accuracy_mode = any(r.correct_tc is not None for r in group)
    metric = "accuracy" if accuracy_mode else "psnr"
    tc = trial_samples(records, method, p_loss, metric)
    mu_tc, sigma_tc = summary_stats(tc)

    mu_nc = sigma_nc = None
    nc_samples = _nc_samples(records, p_loss, accuracy_mode)
    if nc_samples:
        mu_nc, sigma_nc = summary_stats(nc_samples)
    return AccuracySummary(
        method=method,
        p_loss=p_loss,
        mode=metric,
        mu_nl=nl_accuracy if accuracy_mode else None,
        mu_nc=mu_nc,
        mu_tc=mu_tc,
        sigma_nc=sigma_nc,
        sigma_tc=sigma_tc,
        n_samples=len(tc),
    )


def _nc_samples(records, p_loss, accuracy_mode) -> list[float]:
    if accuracy_mode:
        by_trial: dict[int, list[float]] = {}
        for r in records:
            if r.p_loss == p_loss and not r.failed and r.correct_nc is not None:
                by_trial.setdefault((r.method, r.trial_index), []).append(100.0 * float(r.correct_nc))
        # correct_nc is method-independent (paired masks); fold duplicates per trial
        merged: dict[int, list[float]] = {}
        for (_, trial), vals in by_trial.items():
            merged.setdefault(trial, []).extend(vals)
        return [float(np.mean(v)) for _, v in sorted(merged.items())]
    if any(r.method == "none" for r in records if r.p_loss == p_loss):
        return trial_samples(records, "none", p_loss, "psnr")
    return []


# --- experiment runner -----------------------------------------------------


def _metric_record(tensor_id, method_name, p_loss, trial, clean, mask, result, wall_ms):
    mse = masked_mse(result.tensor, clean, mask, over="missing")
    peak = float(np.abs(clean.data).max())
    psnr = psnr_from_mse(mse, peak) if mask.missing_count else math.inf
    return TrialRecord(
        tensor_id=tensor_id,
        method=method_name,
        p_loss=p_loss,
        trial_index=trial,
        missing_mse=mse,
        psnr=psnr,
        observed_count=mask.observed_count,
        missing_count=mask.missing_count,
        wall_time_ms=wall_ms,
        iterations=result.iterations,
    )


def _run_cell(spec, budgets, tensors, tensor_index, p_loss, trial, dump_dir):
    tensor_id, clean = tensors[tensor_index]
    seed = derive_seed(spec.master_seed, tensor_index, trial)
    pattern = draw_loss(packet_count(clean.dims, spec.scheme), ChannelConfig(p_loss, seed))
    damaged, mask = apply_loss(clean, pattern, spec.scheme)
    out = []
    for cfg in spec.methods:
        start = time.perf_counter()
        try:
            result = complete(damaged, mask, cfg, budgets.get(cfg.name))
        except Exception as exc:  # failed trials are reported, not fatal
            out.append(TrialRecord(
                tensor_id=tensor_id, method=cfg.name, p_loss=p_loss, trial_index=trial,
                missing_mse=math.nan, psnr=None, observed_count=mask.observed_count,
                missing_count=mask.missing_count, wall_time_ms=0.0,
                failed=True, error=f"{type(exc).__name__}: {exc}"))
            continue
        wall_ms = (time.perf_counter() - start) * 1000.0
        rec = _metric_record(tensor_id, cfg.name, p_loss, trial, clean, mask, result, wall_ms)
        if dump_dir is not None:
            rel = Path(f"p{int(round(p_loss * 100)):02d}") / f"t{trial:04d}" / cfg.name
            (dump_dir / rel).mkdir(parents=True, exist_ok=True)
            path = dump_dir / rel / f"{tensor_id}.npy"
            write_array_file(result.tensor, path)
            rec.completed_path = str(path)
            mask_path = dump_dir / f"p{int(round(p_loss * 100)):02d}" / f"t{trial:04d}" / f"{tensor_id}.mask.npy"
            if not mask_path.exists():
                write_mask_file(mask, mask_path)
        out.append(rec)
    return out


def run_experiment(spec: ExperimentSpec, tensors: Sequence[tuple[str, FeatureTensor]],
                   dump_dir=None) -> list[TrialRecord]:
    """Execute the full protocol; |tensors| x |methods| x |grid| x trials records.

    Per-trial RNG sub-streams derive from (master_seed, tensor index, trial
    index), so records reproduce bitwise no matter the worker count, and the
    identical mask is shared by every method within a cell.  When ``dump_dir``
    is given, each completed tensor (and each cell's mask) is written there
    for downstream evaluation.
    """
    tensors = list(tensors)
    if not tensors:
        raise ContractViolation("experiment needs at least one tensor")
    budgets = {}
    if spec.protocol == "speed_matched":
        budgets = calibrate_all(spec, tensors[0][1])
    if dump_dir is not None:
        dump_dir = Path(dump_dir)

    cells = [
        (ti, p, k)
        for ti in range(len(tensors))
        for p in spec.p_loss_grid
        for k in range(spec.trials_per_tensor)
    ]
    workers = max(1, int(os.environ.get("TM_THREADS", "1")))
    records: list[TrialRecord] = []
    if workers == 1:
        for ti, p, k in cells:
            records.extend(_run_cell(spec, budgets, tensors, ti, p, k, dump_dir))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(lambda c: _run_cell(spec, budgets, tensors, *c, dump_dir), cells):
                records.extend(chunk)
    method_order = {cfg.name: i for i, cfg in enumerate(spec.methods)}
    records.sort(key=lambda r: (r.tensor_id, r.p_loss, r.trial_index, method_order.get(r.method, 99)))
    return records


# --- speed matching ----------------------------------------------------------


def budget_from_timings(t_ref: float, t_iter: float) -> IterationBudget:
    """floor(reference time / per-iteration time), clamped to at least one sweep."""
    if t_iter <= 0.0:
        raise CalibrationError(
            "measured per-iteration time is zero; use a larger probe tensor")
    if t_ref < 0.0:
        raise CalibrationError(f"reference time must be >= 0, got {t_ref}")
    return IterationBudget.fixed(max(1, int(t_ref // t_iter)))


def _median_time(fn, n_probes: int) -> float:
    fn()  # warm-up: first call pays allocation/JIT-style costs
    times = []
    for _ in range(n_probes):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def calibrate_speed_match(
    reference: MethodConfig,
    target: MethodConfig,
    probe: FeatureTensor,
    p_loss: float = 0.15,
    seed: int = 0,
    n_probes: int = 5,
) -> IterationBudget:
    """Iteration budget that matches the target's wall time to the reference's.

    Medians over ``n_probes`` runs (>= 5) of the reference completion and of
    single-iteration target completions; run on an otherwise idle machine.
    """
    if n_probes < 5:
        raise ContractViolation(f"calibration needs >= 5 probes, got {n_probes}")
    pattern = draw_loss(packet_count(probe.dims, PacketizationScheme()), ChannelConfig(p_loss, seed))
    damaged, mask = apply_loss(probe, pattern, PacketizationScheme())
    t_ref = _median_time(lambda: complete(damaged, mask, reference), n_probes)
    one = IterationBudget.fixed(1)
    t_iter = _median_time(lambda: complete(damaged, mask, target, one), n_probes)
    return budget_from_timings(t_ref, t_iter)


def calibrate_all(spec: ExperimentSpec, probe: FeatureTensor) -> dict:
    """Budgets for every iterative method in the spec, keyed by method name."""
    reference = next((cfg for cfg in spec.methods if cfg.name == "altec"), None)
    if reference is None:
        raise ContractViolation("speed_matched protocol requires an altec method config as reference")
    p_mid = float(np.median(spec.p_loss_grid))
    budgets = {}
    for cfg in spec.methods:
        if cfg.name in ("altec", "none"):
            continue
        budgets[cfg.name] = calibrate_speed_match(reference, cfg, probe, p_loss=p_mid,
                                                  seed=spec.master_seed)
    return budgets


# --- results document --------------------------------------------------------


def build_results_document(spec: ExperimentSpec, records: Sequence[TrialRecord],
                           nl_accuracy: Optional[float] = None) -> dict:
    """JSON-ready document: spec echo, records, summaries, Welch matrix, winners."""
    methods = [cfg.name for cfg in spec.methods]
    completions = [m for m in methods if m != "none"]
    accuracy_mode = any(r.correct_tc is not None for r in records)
    metric = "accuracy" if accuracy_mode else "psnr"

    summaries = []
    welch_rows = []
    winners = []
    for p in spec.p_loss_grid:
        samples = {}
        for m in methods:
            try:
                summaries.append(asdict(summarize(records, m, p, nl_accuracy)))
            except ContractViolation:
                continue
            if m != "none":
                samples[m] = trial_samples(records, m, p, metric)
        usable = {m: s for m, s in samples.items() if len(s) >= 2}
        for i, ma in enumerate(completions):
            for mb in completions[i + 1:]:
                if ma in usable and mb in usable:
                    res = welch_t_test(usable[ma], usable[mb])
                    welch_rows.append({
                        "p_loss": p, "method_a": ma, "method_b": mb,
                        "t_stat": _json_float(res.t_stat), "dof": res.dof,
                        "p_value": res.p_value,
                        "significant_at_95": res.significant_at_95,
                    })
        winner = None
        if len(usable) >= 2:
            winner = declare_winner(usable)
        winners.append({"p_loss": p, "winner": winner})

    n_failed = sum(1 for r in records if r.failed)
    return {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "spec": {
            "tensor_dir": spec.tensor_dir,
            "methods": methods,
            "p_loss_grid": list(spec.p_loss_grid),
            "trials_per_tensor": spec.trials_per_tensor,
            "master_seed": spec.master_seed,
            "protocol": spec.protocol,
            "scheme": {
                "rows_per_packet": spec.scheme.rows_per_packet,
                "grouping": spec.scheme.grouping,
            },
        },
        "metric_mode": metric,
        "records": [_record_dict(r) for r in records],
        "summaries": summaries,
        "welch": welch_rows,
        "winners": winners,
        "failed_trials": n_failed,
    }


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return None
    return x


def _record_dict(r: TrialRecord) -> dict:
    d = asdict(r)
    d["missing_mse"] = _json_float(r.missing_mse)
    d["psnr"] = _json_float(r.psnr)
    return d


def merge_correctness_flags(records: Sequence[TrialRecord], flags: dict) -> list[TrialRecord]:
    """Attach evaluator flags; keys are (tensor_id, method, p_loss, trial_index)."""
    tc_index = {}
    nc_index = {}
    for entry in flags.get("entries", []):
        key = (entry["tensor_id"], entry["method"], float(entry["p_loss"]), int(entry["trial_index"]))
        tc_index[key] = bool(entry["correct"])
        if entry["method"] == "none":
            nc_index[key[0], key[2], key[3]] = bool(entry["correct"])
    out = []
    for r in records:
        correct_tc = tc_index.get((r.tensor_id, r.method, r.p_loss, r.trial_index))
        correct_nc = nc_index.get((r.tensor_id, r.p_loss, r.trial_index))
        out.append(replace(r, correct_tc=correct_tc, correct_nc=correct_nc))
    return out


def format_cell(mu: Optional[float], sigma: Optional[float]) -> str:
    """The mu/sigma pair as it appears in one table cell, e.g. '52.57% / 0.77%'."""
    if mu is None:
        return ""
    if sigma is None:
        return f"{mu:.2f}%"
    return f"{mu:.2f}% / {sigma:.2f}%"


def render_table_csv(documents: Sequence[dict]) -> str:
    """CSV in the results-table layout; merges default and speed-matched docs.

    Columns: p_loss, algorithm, mu_nl, mu_nc, sigma_nc, then mu/sigma of the
    completed condition under each protocol.  Values render at two decimals;
    stored documents keep full precision.
    """
    cells: dict[tuple[float, str], dict] = {}
    for doc in documents:
        protocol = doc["spec"]["protocol"]
        for s in doc["summaries"]:
            if s["method"] == "none":
                continue
            key = (float(s["p_loss"]), s["method"])
            slot = cells.setdefault(key, {"mu_nl": None, "mu_nc": None, "sigma_nc": None,
                                          "default": (None, None), "speed_matched": (None, None)})
            if s["mu_nl"] is not None:
                slot["mu_nl"] = s["mu_nl"]
            if s["mu_nc"] is not None:
                slot["mu_nc"], slot["sigma_nc"] = s["mu_nc"], s["sigma_nc"]
            slot[protocol] = (s["mu_tc"], s["sigma_tc"])

    def fmt(x):
        return "" if x is None else f"{x:.2f}"

    lines = ["p_loss,algorithm,mu_nl,mu_nc,sigma_nc,"
             "default_mu_tc,default_sigma_tc,speed_matched_mu_tc,speed_matched_sigma_tc"]
    for (p, method) in sorted(cells, key=lambda k: (k[0], k[1])):
        slot = cells[(p, method)]
        d_mu, d_sigma = slot["default"]
        s_mu, s_sigma = slot["speed_matched"]
        lines.append(",".join([
            f"{p:g}", method, fmt(slot["mu_nl"]), fmt(slot["mu_nc"]), fmt(slot["sigma_nc"]),
            fmt(d_mu), fmt(d_sigma), fmt(s_mu), fmt(s_sigma),
        ]))
    return "\n".join(lines) + "\n"


def records_from_document(doc: dict) -> list[TrialRecord]:
    fields = {f for f in TrialRecord.__dataclass_fields__}
    out = []
    for d in doc["records"]:
        kwargs = {k: v for k, v in d.items() if k in fields}
        if kwargs.get("missing_mse") is None:
            kwargs["missing_mse"] = math.nan
        out.append(TrialRecord(**kwargs))
    return out


def spec_from_document(doc: dict) -> ExperimentSpec:
    s = doc["spec"]
    return ExperimentSpec(
        methods=tuple(MethodConfig(name) for name in s["methods"]),
        tensor_dir=s.get("tensor_dir"),
        p_loss_grid=tuple(s["p_loss_grid"]),
        trials_per_tensor=s["trials_per_tensor"],
        master_seed=s["master_seed"],
        protocol=s["protocol"],
        scheme=PacketizationScheme(rows_per_packet=s["scheme"]["rows_per_packet"],
                                   grouping=s["scheme"]["grouping"]),
    )


def write_results_document(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def read_results_document(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
