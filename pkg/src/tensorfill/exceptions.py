"""Exception hierarchy shared across the package."""


class TensorFillError(Exception):
    """Base class for all package errors."""


class ContractViolation(TensorFillError, ValueError):
    """An argument breaks a documented precondition."""


class NumericalFailure(TensorFillError, RuntimeError):
    """A numerical routine failed to converge or produced garbage."""


class CalibrationError(TensorFillError, RuntimeError):
    """Speed-match calibration could not produce a usable budget."""


class ConfigError(TensorFillError, ValueError):
    """A config file or CLI flag combination is invalid."""


class WeightsFormatError(TensorFillError, ValueError):
    """An ALTeC weights file is malformed."""


class NpyFormatError(TensorFillError, ValueError):
    """Base class for array-file parse errors; carries path and byte offset."""

    def __init__(self, message: str, path, offset: int):
        super().__init__(f"{path}: {message} (byte offset {offset})")
        self.path = path
        self.offset = offset


class NpyBadMagic(NpyFormatError):
    """File does not start with the NPY magic bytes."""


class NpyUnsupportedVersion(NpyFormatError):
    """NPY version other than 1.0."""


class NpyHeaderError(NpyFormatError):
    """Header dictionary is not parseable or has unexpected keys."""


class NpyDtypeError(NpyFormatError):
    """Unsupported dtype descriptor (includes pickled object arrays)."""


class NpyFortranOrderError(NpyFormatError):
    """fortran_order is true; only C-order payloads are accepted."""


class NpyShapeError(NpyFormatError):
    """Shape is not a 3-D tuple of positive integers."""


class NpyPayloadError(NpyFormatError):
    """Payload is truncated or does not match the declared shape."""
