"""Dense 3-D feature tensors, observation masks, and mode-n matricization.

Conventions used throughout the package:

* A feature tensor is H x W x C (spatial rows, spatial columns, channels),
  stored row-major with the channel index innermost, as float32.
* Mode-n unfolding of an H x W x C tensor puts index n on the rows and
  flattens the remaining two indices in their natural (row-major) order,
  so the innermost surviving index varies fastest along columns.  This is
  the numpy ``moveaxis + reshape`` convention.
* All intermediate arithmetic (norms, least squares, SVDs) runs in
  float64; float32 is a storage format only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation

__all__ = [
    "FeatureTensor",
    "ObservationMask",
    "ModeMatrix",
    "unfold",
    "fold",
    "masked_fill",
    "masked_mse",
    "frobenius_norm",
]


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Immutable H x W x C array of finite float32 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ContractViolation(f"feature tensor must be 3-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ContractViolation(f"feature tensor dims must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.isfinite(arr).all():
            raise ContractViolation("feature tensor entries must all be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        h, w, c = self.data.shape
        return (h, w, c)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """Boolean companion of a FeatureTensor; True means the entry arrived."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ContractViolation(f"observation mask must be 3-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ContractViolation(f"observation mask dims must be positive, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        h, w, c = self.data.shape
        return (h, w, c)

    @property
    def observed_count(self) -> int:
        return int(self.data.sum())

    @property
    def missing_count(self) -> int:
        return int(self.data.size - self.data.sum())

    @classmethod
    def all_observed(cls, dims: tuple[int, int, int]) -> "ObservationMask":
        return cls(np.ones(dims, dtype=bool))


@dataclass(frozen=True, eq=False)
class ModeMatrix:
    """A mode-n unfolding: 2-D float64 matrix tagged with its mode."""

    mode: int
    data: np.ndarray

    def __post_init__(self):
        if self.mode not in (1, 2, 3):
            raise ContractViolation(f"mode must be 1, 2 or 3, got {self.mode}")
        arr = np.ascontiguousarray(np.asarray(self.data), dtype=np.float64)
        if arr.ndim != 2:
            raise ContractViolation(f"mode matrix must be 2-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        r, c = self.data.shape
        return (r, c)


def _require_same_dims(a_dims, b_dims, what: str) -> None:
    if tuple(a_dims) != tuple(b_dims):
        raise ContractViolation(f"{what}: dimensions differ, {tuple(a_dims)} vs {tuple(b_dims)}")


def unfold_array(arr: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n matricization of a raw 3-D array (no validation, no copy of dtype)."""
    return np.reshape(np.moveaxis(arr, mode - 1, 0), (arr.shape[mode - 1], -1))


def fold_array(mat: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold_array` for the given target dims."""
    shape = list(dims)
    lead = shape.pop(mode - 1)
    return np.moveaxis(np.reshape(mat, [lead] + shape), 0, mode - 1)


def unfold(t: FeatureTensor, mode: int) -> ModeMatrix:
    """Unfold a tensor along ``mode`` (1-based).

    Row i of the result is the slice of the tensor with index ``mode`` = i;
    the other two indices are flattened in storage order (inner index
    fastest), which makes the round trip through :func:`fold` exact.
    """
    if mode not in (1, 2, 3):
        raise ContractViolation(f"mode must be 1, 2 or 3, got {mode}")
    return ModeMatrix(mode=mode, data=unfold_array(t.data.astype(np.float64), mode))


def fold(m: ModeMatrix, mode: int, dims: tuple[int, int, int]) -> FeatureTensor:
    """Fold a mode matrix back into an H x W x C tensor; exact inverse of unfold."""
    if mode not in (1, 2, 3):
        raise ContractViolation(f"mode must be 1, 2 or 3, got {mode}")
    h, w, c = dims
    expected_rows = dims[mode - 1]
    expected_cols = h * w * c // dims[mode - 1]
    if m.shape != (expected_rows, expected_cols):
        raise ContractViolation(
            f"mode-{mode} matrix of shape {m.shape} does not match dims {tuple(dims)}"
        )
    return FeatureTensor(fold_array(m.data, mode, (h, w, c)))


def masked_fill(t: FeatureTensor, mask: ObservationMask, value: float) -> FeatureTensor:
    """Copy observed entries verbatim and set missing entries to ``value``."""
    _require_same_dims(t.dims, mask.dims, "masked_fill")
    out = np.where(mask.data, t.data, np.float32(value))
    return FeatureTensor(out)


def masked_mse(a: FeatureTensor, b: FeatureTensor, mask: ObservationMask, over: str = "all") -> float:
    """Mean squared difference over a subset of entries.

    ``over`` selects the subset: "observed", "missing" or "all".  An empty
    subset yields 0.0 so loss-free corner cases need no special handling.
    """
    _require_same_dims(a.dims, b.dims, "masked_mse")
    _require_same_dims(a.dims, mask.dims, "masked_mse")
    if over == "all":
        sel = slice(None)
        count = a.data.size
    elif over == "observed":
        sel = mask.data
        count = mask.observed_count
    elif over == "missing":
        sel = ~mask.data
        count = mask.missing_count
    else:
        raise ContractViolation(f"over must be 'observed', 'missing' or 'all', got {over!r}")
    if count == 0:
        return 0.0
    diff = a.data[sel].astype(np.float64) - b.data[sel].astype(np.float64)
    return float(np.mean(diff * diff))


def frobenius_norm(x) -> float:
    """Frobenius norm with float64 accumulation; accepts tensors, masks' partners, or arrays."""
    arr = x.data if hasattr(x, "data") else np.asarray(x)
    return float(np.linalg.norm(arr.astype(np.float64)))
