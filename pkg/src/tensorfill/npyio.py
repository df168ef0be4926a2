"""Bit-exact NPY v1.0 reading and writing.

Only the subset this pipeline needs: little-endian float payloads ("<f4",
"<f8") for tensors and "|u1" for masks, C order, 3-D shapes.  Writes are
canonical (fixed header text, space padding to a 64-byte boundary, newline
terminator) so identical tensors produce byte-identical files.  Pickled
object arrays and v2/v3 headers are rejected outright.
"""

from __future__ import annotations

import ast
import struct
from pathlib import Path

import numpy as np

from .core import FeatureTensor, ObservationMask
from .exceptions import (
    NpyBadMagic,
    NpyDtypeError,
    NpyFortranOrderError,
    NpyHeaderError,
    NpyPayloadError,
    NpyShapeError,
    NpyUnsupportedVersion,
)

__all__ = [
    "read_array_file",
    "write_array_file",
    "read_mask_file",
    "write_mask_file",
    "load_tensor_dir",
]

_MAGIC = b"\x93NUMPY"
_TENSOR_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_MASK_DTYPES = {"|u1": np.dtype("|u1")}


def _parse_header(blob: bytes, path, allowed_dtypes) -> tuple[np.dtype, tuple[int, int, int], int]:
    if blob[:6] != _MAGIC:
        raise NpyBadMagic(f"bad magic {blob[:6]!r}", path, 0)
    if len(blob) < 10:
        raise NpyPayloadError("file ends inside the fixed header", path, len(blob))
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise NpyUnsupportedVersion(f"NPY version {major}.{minor} not supported", path, 6)
    (header_len,) = struct.unpack_from("<H", blob, 8)
    data_start = 10 + header_len
    if len(blob) < data_start:
        raise NpyPayloadError("file ends inside the header dictionary", path, len(blob))
    raw = blob[10:data_start]
    if not raw.endswith(b"\n"):
        raise NpyHeaderError("header is not newline-terminated", path, data_start - 1)
    try:
        header = ast.literal_eval(raw.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise NpyHeaderError(f"header dictionary does not parse: {exc}", path, 10) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyHeaderError(f"unexpected header keys {sorted(header) if isinstance(header, dict) else header!r}", path, 10)

    descr = header["descr"]
    if descr not in allowed_dtypes:
        raise NpyDtypeError(f"unsupported dtype descriptor {descr!r}", path, 10)
    if header["fortran_order"] is not False:
        raise NpyFortranOrderError("fortran_order must be false", path, 10)
    shape = header["shape"]
    if (not isinstance(shape, tuple) or len(shape) != 3
            or not all(isinstance(d, int) and d > 0 for d in shape)):
        raise NpyShapeError(f"shape must be a 3-tuple of positive ints, got {shape!r}", path, 10)
    return allowed_dtypes[descr], shape, data_start


def _read_payload(path, allowed_dtypes) -> np.ndarray:
    blob = Path(path).read_bytes()
    dtype, shape, data_start = _parse_header(blob, path, allowed_dtypes)
    expected = dtype.itemsize * shape[0] * shape[1] * shape[2]
    actual = len(blob) - data_start
    if actual != expected:
        raise NpyPayloadError(
            f"payload holds {actual} bytes, shape {shape} needs {expected}", path, data_start + min(actual, expected)
        )
    return np.frombuffer(blob, dtype=dtype, count=shape[0] * shape[1] * shape[2],
                         offset=data_start).reshape(shape)


def read_array_file(path) -> FeatureTensor:
    """Read one tensor; float64 payloads are narrowed to float32 (round to nearest)."""
    arr = _read_payload(path, _TENSOR_DTYPES)
    return FeatureTensor(arr.astype(np.float32))


def read_mask_file(path) -> ObservationMask:
    """Read a 0/1 uint8 mask of the same layout."""
    arr = _read_payload(path, _MASK_DTYPES)
    return ObservationMask(arr != 0)


def _canonical_header(descr: str, shape: tuple[int, int, int]) -> bytes:
    text = "{'descr': '%s', 'fortran_order': False, 'shape': (%d, %d, %d), }" % (
        descr, shape[0], shape[1], shape[2])
    base = len(_MAGIC) + 2 + 2  # magic + version + header-length field
    total = base + len(text) + 1
    pad = (64 - total % 64) % 64
    payload = text + " " * pad + "\n"
    return _MAGIC + bytes([1, 0]) + struct.pack("<H", len(payload)) + payload.encode("latin1")


def write_array_file(t: FeatureTensor, path) -> None:
    """Write a canonical '<f4' C-order NPY v1.0 file."""
    with open(path, "wb") as fh:
        fh.write(_canonical_header("<f4", t.dims))
        fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def write_mask_file(mask: ObservationMask, path) -> None:
    """Write a canonical '|u1' 0/1 NPY v1.0 file."""
    with open(path, "wb") as fh:
        fh.write(_canonical_header("|u1", mask.dims))
        fh.write(mask.data.astype("|u1").tobytes())


def load_tensor_dir(path, pattern: str = "*.npy") -> list[tuple[str, FeatureTensor]]:
    """Every matching tensor file in the directory, sorted by name; ids are stems."""
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"tensor directory {directory} does not exist")
    out = []
    for p in sorted(directory.glob(pattern)):
        if p.name.endswith(".mask.npy"):
            continue
        out.append((p.stem, read_array_file(p)))
    if not out:
        raise FileNotFoundError(f"no {pattern} tensors found in {directory}")
    return out
