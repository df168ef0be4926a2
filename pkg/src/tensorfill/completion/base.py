"""Shared pieces of the completion methods: budgets, results, dispatch."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import FeatureTensor, ObservationMask, masked_fill
from ..exceptions import ContractViolation

__all__ = [
    "IterationBudget",
    "CompletionResult",
    "MethodConfig",
    "complete",
    "complete_none",
    "METHOD_NAMES",
]

UNTIL_CONVERGENCE = "until_convergence"
FIXED_ITERS = "fixed_iters"

METHOD_NAMES = ("silrtc", "halrtc", "fcp", "altec", "none")


@dataclass(frozen=True)
class IterationBudget:
    """Either run to convergence (capped by the method's max_iters) or a fixed sweep count."""

    mode: str = UNTIL_CONVERGENCE
    iters: Optional[int] = None

    def __post_init__(self):
        if self.mode not in (UNTIL_CONVERGENCE, FIXED_ITERS):
            raise ContractViolation(f"unknown budget mode {self.mode!r}")
        if self.mode == FIXED_ITERS:
            if self.iters is None or self.iters < 1:
                raise ContractViolation(f"fixed budget needs iters >= 1, got {self.iters}")

    @classmethod
    def until_convergence(cls) -> "IterationBudget":
        return cls(mode=UNTIL_CONVERGENCE)

    @classmethod
    def fixed(cls, iters: int) -> "IterationBudget":
        return cls(mode=FIXED_ITERS, iters=iters)


@dataclass
class CompletionResult:
    """Completed tensor plus run diagnostics."""

    tensor: FeatureTensor
    iterations: int
    converged: bool
    objective: list = field(default_factory=list)
    consensus_residual: Optional[float] = None
    rows_predicted: Optional[int] = None


@dataclass(frozen=True)
class MethodConfig:
    """A completion method by name plus its (optional) parameter bundle.

    ``params`` is the method's *Params dataclass; ``weights`` carries trained
    ALTeC weights when name == "altec".
    """

    name: str
    params: object = None
    weights: object = None

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ContractViolation(f"unknown method {self.name!r}; expected one of {METHOD_NAMES}")


def prepare_inputs(t: FeatureTensor, mask: ObservationMask):
    """Zero-filled float64 working copy, boolean mask array, and the float32 original."""
    if t.dims != mask.dims:
        raise ContractViolation(f"tensor dims {t.dims} do not match mask dims {mask.dims}")
    obs = mask.data
    x = np.where(obs, t.data, np.float32(0.0)).astype(np.float64)
    return x, obs


def finalize(x: np.ndarray, t: FeatureTensor, mask: ObservationMask) -> FeatureTensor:
    """Cast the float64 iterate to storage precision, restoring observed entries bitwise."""
    out = np.where(np.isfinite(x), x, 0.0).astype(np.float32)
    out[mask.data] = t.data[mask.data]
    return FeatureTensor(out)


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = float(np.linalg.norm(old))
    if denom == 0.0:
        return float(np.linalg.norm(new))
    return float(np.linalg.norm(new - old)) / denom


def data_scale(x: np.ndarray) -> float:
    """Frobenius norm of the zero-filled input, the scale all default thresholds hang off."""
    return float(np.linalg.norm(x))


def complete_none(t: FeatureTensor, mask: ObservationMask) -> CompletionResult:
    """No completion: missing entries stay zero (the receiver's raw view)."""
    return CompletionResult(tensor=masked_fill(t, mask, 0.0), iterations=0, converged=True)


def complete(
    t: FeatureTensor,
    mask: ObservationMask,
    config: MethodConfig,
    budget: IterationBudget | None = None,
) -> CompletionResult:
    """Run one completion method on a damaged tensor. Single entry point for the harness."""
    from .altec import complete_altec
    from .fcp import complete_fcp
    from .halrtc import complete_halrtc
    from .silrtc import complete_silrtc

    budget = budget or IterationBudget.until_convergence()
    if config.name == "none":
        return complete_none(t, mask)
    if config.name == "silrtc":
        return complete_silrtc(t, mask, params=config.params, budget=budget)
    if config.name == "halrtc":
        return complete_halrtc(t, mask, params=config.params, budget=budget)
    if config.name == "fcp":
        return complete_fcp(t, mask, params=config.params, budget=budget)
    if config.name == "altec":
        if config.weights is None:
            raise ContractViolation("altec requires trained weights")
        return complete_altec(t, mask, config.weights)
    raise ContractViolation(f"unknown method {config.name!r}")
