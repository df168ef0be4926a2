"""Single-pass linear row prediction trained offline on clean tensors.

For every channel c the predictor estimates a missing spatial row as a
linear combination of C + 2 regressor rows plus a bias:

* the collocated row of each of the C channels (the self-channel column is
  identically zero during training, so its coefficient only exists to keep
  the layout uniform),
* the row directly above in the same channel,
* the row directly below in the same channel.

Scalar weights are shared across all rows of a channel.  At completion time
missing regressor rows contribute zero (the damaged tensor is already
zero-filled) and boundary rows simply lack the off-edge neighbor.  The whole
completion is one vectorized pass: no iteration, each missing row touched
exactly once.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core import FeatureTensor, ObservationMask
from ..exceptions import ContractViolation, WeightsFormatError
from .base import CompletionResult, finalize, prepare_inputs

__all__ = [
    "ALTeCWeights",
    "train_altec",
    "complete_altec",
    "save_altec_weights",
    "load_altec_weights",
]

_MAGIC = b"ALTC"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class ALTeCWeights:
    """(C, C+2) coefficient matrix, per-channel bias, and the training ridge."""

    weights: np.ndarray
    bias: np.ndarray
    ridge_lambda: float

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights), dtype=np.float64)
        b = np.ascontiguousarray(np.asarray(self.bias), dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != w.shape[0] + 2:
            raise ContractViolation(f"weights must be (C, C+2), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ContractViolation(f"bias must be (C,), got {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ContractViolation("ALTeC weights must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def channels(self) -> int:
        return self.weights.shape[0]


def _design_stack(data: np.ndarray, channel: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressor stack (H, C+3, W) for one channel of one tensor, plus targets (H, W).

    Column layout: C collocated rows (self zeroed), up neighbor, down
    neighbor, then the constant-1 bias row.
    """
    h, w, c = data.shape
    z = np.empty((h, c + 3, w), dtype=np.float64)
    z[:, :c, :] = np.transpose(data, (0, 2, 1))
    z[:, channel, :] = 0.0
    z[:, c, :] = 0.0
    z[1:, c, :] = data[:-1, :, channel]
    z[:, c + 1, :] = 0.0
    z[:-1, c + 1, :] = data[1:, :, channel]
    z[:, c + 2, :] = 1.0
    return z, data[:, :, channel].astype(np.float64)


def train_altec(clean_tensors, ridge_lambda: float) -> ALTeCWeights:
    """Fit per-channel prediction weights on clean tensors by ridge least squares.

    The bias term is not penalized.  With ridge_lambda == 0 the normal
    equations must be full rank; pass a positive ridge for degenerate
    training sets.
    """
    tensors = list(clean_tensors)
    if not tensors:
        raise ContractViolation("training set must contain at least one tensor")
    if ridge_lambda < 0:
        raise ContractViolation(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    c = tensors[0].channels
    for t in tensors:
        if t.channels != c:
            raise ContractViolation(
                f"all training tensors must share the channel count; got {t.channels} vs {c}"
            )

    arrays = [t.data.astype(np.float64) for t in tensors]
    n_samples = float(sum(arr.shape[0] * arr.shape[1] for arr in arrays))
    weights = np.empty((c, c + 2), dtype=np.float64)
    bias = np.empty(c, dtype=np.float64)
    reg = ridge_lambda * np.diag(np.r_[np.ones(c + 2), 0.0])
    for ch in range(c):
        gram = np.zeros((c + 3, c + 3), dtype=np.float64)
        rhs = np.zeros(c + 3, dtype=np.float64)
        for arr in arrays:
            z, y = _design_stack(arr, ch)
            gram += np.einsum("riw,rjw->ij", z, z, optimize=True)
            rhs += np.einsum("riw,rw->i", z, y, optimize=True)
        # normal equations are per-sample means so ridge strength (and the
        # solution) does not depend on the training set size
        gram /= n_samples
        rhs /= n_samples
        gram += reg
        try:
            sol = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            if ridge_lambda == 0:
                raise ContractViolation(
                    "normal equations are rank deficient; retrain with ridge_lambda > 0"
                ) from None
            sol = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        weights[ch] = sol[: c + 2]
        bias[ch] = sol[c + 2]
    return ALTeCWeights(weights=weights, bias=bias, ridge_lambda=float(ridge_lambda))


def complete_altec(t: FeatureTensor, mask: ObservationMask, w: ALTeCWeights) -> CompletionResult:
    """Predict every missing row in one pass from the zero-filled tensor."""
    if t.channels != w.channels:
        raise ContractViolation(
            f"tensor has {t.channels} channels but weights were trained for {w.channels}"
        )
    x, obs = prepare_inputs(t, mask)
    h, width, c = t.dims

    # a (row, channel) pair counts as missing when any of its entries is lost
    row_observed = obs.all(axis=1)  # (H, C)
    miss_r, miss_c = np.nonzero(~row_observed)
    if miss_r.size == 0:
        return CompletionResult(tensor=finalize(x, t, mask), iterations=0, converged=True, rows_predicted=0)

    up = np.zeros((miss_r.size, width), dtype=np.float64)
    has_up = miss_r > 0
    up[has_up] = x[miss_r[has_up] - 1, :, miss_c[has_up]]
    down = np.zeros((miss_r.size, width), dtype=np.float64)
    has_down = miss_r < h - 1
    down[has_down] = x[miss_r[has_down] + 1, :, miss_c[has_down]]

    coll = x[miss_r]  # (n, W, C); missing regressor rows are already zero
    wsel = w.weights[miss_c]  # (n, C+2)
    pred = np.einsum("nwc,nc->nw", coll, wsel[:, :c], optimize=True)
    pred += wsel[:, c : c + 1] * up
    pred += wsel[:, c + 1 : c + 2] * down
    pred += w.bias[miss_c][:, None]

    out = x.copy()
    out[miss_r, :, miss_c] = pred
    return CompletionResult(
        tensor=finalize(out, t, mask),
        iterations=1,
        converged=True,
        rows_predicted=int(miss_r.size),
    )


def save_altec_weights(w: ALTeCWeights, path) -> None:
    """Write the versioned little-endian binary weights file."""
    c = w.channels
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, c))
        for ch in range(c):
            fh.write(w.weights[ch].astype("<f8").tobytes())
            fh.write(struct.pack("<d", float(w.bias[ch])))
        fh.write(struct.pack("<d", w.ridge_lambda))


def load_altec_weights(path) -> ALTeCWeights:
    """Read a weights file written by :func:`save_altec_weights`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise WeightsFormatError(f"{path}: truncated header")
    version, c = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")
    expected = 12 + c * (c + 3) * 8 + 8
    if len(blob) != expected:
        raise WeightsFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    offset = 12
    weights = np.empty((c, c + 2), dtype=np.float64)
    bias = np.empty(c, dtype=np.float64)
    for ch in range(c):
        weights[ch] = np.frombuffer(blob, dtype="<f8", count=c + 2, offset=offset)
        offset += (c + 2) * 8
        (bias[ch],) = struct.unpack_from("<d", blob, offset)
        offset += 8
    (ridge,) = struct.unpack_from("<d", blob, offset)
    return ALTeCWeights(weights=weights, bias=bias, ridge_lambda=ridge)
