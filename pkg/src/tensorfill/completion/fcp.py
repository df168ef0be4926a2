"""Rank-R CP completion by masked alternating least squares.

The model is a sum of R rank-1 outer products.  Each sweep updates the
three factor matrices; every factor row is the exact minimizer of the
observed-entry least-squares problem given everything else, which makes
the regularized objective non-increasing sweep over sweep.  A fusion
penalty on adjacent rows of the two spatial factors (weight smooth_lambda)
discourages jagged reconstructions; rows are updated in order so the
penalty terms always see the latest neighbor values.  The sparse variant
clamps the reconstruction at zero for post-ReLU tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FeatureTensor, ObservationMask, unfold_array
from ..exceptions import ContractViolation
from .base import (
    FIXED_ITERS,
    UNTIL_CONVERGENCE,
    CompletionResult,
    IterationBudget,
    finalize,
    prepare_inputs,
)

__all__ = ["FCPParams", "complete_fcp"]


@dataclass(frozen=True)
class FCPParams:
    rank: int = 8
    sparse_variant: bool = False
    smooth_lambda: float = 0.1
    max_sweeps: int = 50
    tol: float = 1e-6
    init_seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ContractViolation(f"rank must be >= 1, got {self.rank}")
        if self.smooth_lambda < 0:
            raise ContractViolation(f"smooth_lambda must be >= 0, got {self.smooth_lambda}")
        if self.max_sweeps < 1:
            raise ContractViolation(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.tol <= 0:
            raise ContractViolation(f"tol must be positive, got {self.tol}")


def _solve_row(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a small normal-equation system, falling back to ridge jitter then lstsq."""
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        pass
    eps = max(float(np.trace(gram)) * 1e-12, 1e-12)
    eye = np.eye(gram.shape[0])
    for _ in range(6):
        try:
            return np.linalg.solve(gram + eps * eye, rhs)
        except np.linalg.LinAlgError:
            eps *= 1e3
    return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def _khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row (i, j) -> a_i * b_j, j varying fastest: matches the unfolding order
    n, r = a.shape
    m = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(n * m, r)


def _update_spatial(factor, kr, data_rows, mask_rows, smooth):
    """Sequential exact row solves with fusion to the current neighbor rows."""
    n, r = factor.shape
    eye = np.eye(r)
    for i in range(n):
        w = mask_rows[i]
        z = kr[w]
        gram = z.T @ z
        rhs = z.T @ data_rows[i, w]
        if smooth > 0.0:
            nb = 0
            if i > 0:
                rhs = rhs + smooth * factor[i - 1]
                nb += 1
            if i < n - 1:
                rhs = rhs + smooth * factor[i + 1]
                nb += 1
            gram = gram + smooth * nb * eye
        factor[i] = _solve_row(gram, rhs)


def _update_channel(factor, kr, data_rows, mask_rows):
    """Batched exact row solves for the (fusion-free) channel factor."""
    w = mask_rows.astype(np.float64)
    grams = np.einsum("pr,ps,cp->crs", kr, kr, w, optimize=True)
    rhs = np.einsum("cp,pr->cr", data_rows * w, kr, optimize=True)
    try:
        factor[:] = np.linalg.solve(grams, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for c in range(factor.shape[0]):
            factor[c] = _solve_row(grams[c], rhs[c])


def complete_fcp(
    t: FeatureTensor,
    mask: ObservationMask,
    params: FCPParams | None = None,
    budget: IterationBudget | None = None,
) -> CompletionResult:
    """Masked CP-ALS completion.  ``objective`` records the observed-entry
    sum of squared residuals after every sweep."""
    params = params or FCPParams()
    budget = budget or IterationBudget.until_convergence()
    x, obs = prepare_inputs(t, mask)
    h, w, c = t.dims
    r = params.rank
    if r > min(h * w, w * c, h * c):
        raise ContractViolation(
            f"rank {r} exceeds the largest identifiable CP rank {min(h * w, w * c, h * c)}"
        )

    rng = np.random.default_rng(params.init_seed)
    fa = rng.random((h, r))
    fb = rng.random((w, r))
    fc = rng.random((c, r))

    x1, m1 = unfold_array(x, 1), unfold_array(obs, 1)
    x2, m2 = unfold_array(x, 2), unfold_array(obs, 2)
    x3, m3 = unfold_array(x, 3), unfold_array(obs, 3)

    limit = budget.iters if budget.mode == FIXED_ITERS else params.max_sweeps
    check_tol = budget.mode == UNTIL_CONVERGENCE
    objective: list[float] = []
    converged = False
    sweep = 0
    for sweep in range(1, limit + 1):
        _update_spatial(fa, _khatri_rao(fb, fc), x1, m1, params.smooth_lambda)
        _update_spatial(fb, _khatri_rao(fa, fc), x2, m2, params.smooth_lambda)
        _update_channel(fc, _khatri_rao(fa, fb), x3, m3)
        recon = np.einsum("ir,jr,kr->ijk", fa, fb, fc, optimize=True)
        resid = (x - recon)[obs]
        fit = float(resid @ resid)
        objective.append(fit)
        if check_tol and sweep > 1:
            prev = objective[-2]
            if abs(prev - fit) <= params.tol * max(prev, 1e-30):
                converged = True
                break

    if params.sparse_variant:
        recon = np.maximum(recon, 0.0)
    return CompletionResult(
        tensor=finalize(recon, t, mask),
        iterations=sweep,
        converged=converged,
        objective=objective,
    )
