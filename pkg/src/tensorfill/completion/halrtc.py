"""ADMM trace-norm completion (the "high accuracy" variant).

Splitting variables M_i carry the per-mode low-rank structure, dual tensors
Y_i enforce consensus with the completed tensor X, and the penalty rho grows
geometrically so the shrinkage bias vanishes as the iteration proceeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import FeatureTensor, ObservationMask, fold_array, unfold_array
from ..exceptions import ContractViolation
from .base import (
    FIXED_ITERS,
    UNTIL_CONVERGENCE,
    CompletionResult,
    IterationBudget,
    data_scale,
    finalize,
    prepare_inputs,
    relative_change,
)
from .svt import svt_gram_array

__all__ = ["HaLRTCParams", "complete_halrtc"]

# rho defaults to DEFAULT_RHO_SCALE / ||X0||_F so the initial shrinkage
# alpha_i/rho is on the data's own scale; an absolute default would stall
# (all-zero shrinkage output) or thrash depending on the tensor magnitude.
DEFAULT_RHO_SCALE = 3.0


@dataclass(frozen=True)
class HaLRTCParams:
    alphas: tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    rho: Optional[float] = None  # None: scaled from the input
    rho_scale: float = 1.05
    max_iters: int = 500
    tol: float = 1e-8

    def __post_init__(self):
        if len(self.alphas) != 3 or any(a < 0 for a in self.alphas):
            raise ContractViolation(f"alphas must be three non-negative floats, got {self.alphas}")
        if abs(sum(self.alphas) - 1.0) > 1e-12:
            raise ContractViolation(f"alphas must sum to 1, got sum {sum(self.alphas)}")
        if self.rho is not None and self.rho <= 0:
            raise ContractViolation(f"rho must be positive, got {self.rho}")
        if self.rho_scale < 1.0:
            raise ContractViolation(f"rho_scale must be >= 1, got {self.rho_scale}")
        if self.max_iters < 1:
            raise ContractViolation(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ContractViolation(f"tol must be positive, got {self.tol}")


def complete_halrtc(
    t: FeatureTensor,
    mask: ObservationMask,
    params: HaLRTCParams | None = None,
    budget: IterationBudget | None = None,
    track_objective: bool = False,
) -> CompletionResult:
    """ADMM completion; with ``track_objective`` the per-iteration consensus
    residual max_i ||fold(M_i) - X||_F is recorded in ``objective``."""
    params = params or HaLRTCParams()
    budget = budget or IterationBudget.until_convergence()
    x, obs = prepare_inputs(t, mask)
    miss = ~obs
    dims = t.dims
    alphas = np.asarray(params.alphas, dtype=np.float64)
    scale = data_scale(x)
    rho = params.rho if params.rho is not None else (DEFAULT_RHO_SCALE / scale if scale > 0 else 1.0)

    duals = [np.zeros_like(x) for _ in range(3)]
    limit = budget.iters if budget.mode == FIXED_ITERS else params.max_iters
    check_tol = budget.mode == UNTIL_CONVERGENCE
    objective: list[float] = []
    consensus = None
    converged = False
    it = 0
    for it in range(1, limit + 1):
        folds = []
        for mode in (1, 2, 3):
            target = unfold_array(x + duals[mode - 1] / rho, mode)
            shrunk = svt_gram_array(target, alphas[mode - 1] / rho)
            folds.append(fold_array(shrunk, mode, dims))
        acc = sum(folds[i] - duals[i] / rho for i in range(3)) / 3.0
        new_x = x.copy()
        new_x[miss] = acc[miss]
        consensus = max(float(np.linalg.norm(folds[i] - new_x)) for i in range(3))
        if track_objective:
            objective.append(consensus)
        for i in range(3):
            duals[i] = duals[i] - rho * (folds[i] - new_x)
        delta = relative_change(new_x, x)
        x = new_x
        rho *= params.rho_scale
        if check_tol and delta < params.tol:
            converged = True
            break

    return CompletionResult(
        tensor=finalize(x, t, mask),
        iterations=it,
        converged=converged,
        objective=objective,
        consensus_residual=consensus,
    )
