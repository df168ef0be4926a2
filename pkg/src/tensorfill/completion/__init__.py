"""The four completion methods plus the zero-fill baseline."""

from .altec import (
    ALTeCWeights,
    complete_altec,
    load_altec_weights,
    save_altec_weights,
    train_altec,
)
from .base import (
    METHOD_NAMES,
    CompletionResult,
    IterationBudget,
    MethodConfig,
    complete,
    complete_none,
)
from .fcp import FCPParams, complete_fcp
from .halrtc import HaLRTCParams, complete_halrtc
from .silrtc import SiLRTCParams, complete_silrtc
from .svt import nuclear_norm, svt, svt_array

__all__ = [
    "ALTeCWeights",
    "CompletionResult",
    "FCPParams",
    "HaLRTCParams",
    "IterationBudget",
    "METHOD_NAMES",
    "MethodConfig",
    "SiLRTCParams",
    "complete",
    "complete_altec",
    "complete_fcp",
    "complete_halrtc",
    "complete_none",
    "complete_silrtc",
    "load_altec_weights",
    "nuclear_norm",
    "save_altec_weights",
    "svt",
    "svt_array",
    "train_altec",
]
