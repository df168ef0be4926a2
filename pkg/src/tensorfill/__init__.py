"""tensorfill: packet-loss simulation and low-rank completion for deep feature tensors."""

from .channel import (
    ChannelConfig,
    LossPattern,
    PacketizationScheme,
    apply_loss,
    derive_seed,
    draw_loss,
    packet_count,
    packet_index_map,
)
from .core import (
    FeatureTensor,
    ModeMatrix,
    ObservationMask,
    fold,
    frobenius_norm,
    masked_fill,
    masked_mse,
    unfold,
)
from .completion import (
    ALTeCWeights,
    CompletionResult,
    FCPParams,
    HaLRTCParams,
    IterationBudget,
    MethodConfig,
    SiLRTCParams,
    complete,
    complete_altec,
    complete_fcp,
    complete_halrtc,
    complete_none,
    complete_silrtc,
    load_altec_weights,
    save_altec_weights,
    svt,
    train_altec,
)
from .exceptions import (
    CalibrationError,
    ConfigError,
    ContractViolation,
    NumericalFailure,
    TensorFillError,
)

__version__ = "0.1.0"
