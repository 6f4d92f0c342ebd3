"""Raw binary tensor container used for dataset blobs and model weights.

Wire format (little-endian, normative for dataset interchange):

    bytes 0..3   magic b"VADT"
    byte  4      dtype code (1 = float32, 2 = float64)
    byte  5      ndim
    bytes 6..7   reserved, must be 0
    then         ndim x u32 dimension sizes
    then         payload: itemsize * prod(dims) bytes, little-endian, C order

Header length is 8 + 4 * ndim bytes. Dataset flow crops must use dtype
code 1 (float32); code 2 exists for model artifacts only.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"VADT"
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class TensorFormatError(ValidationError):
    """A tensor file violates the container format."""


def header_bytes(dtype_code: int, shape: tuple[int, ...]) -> bytes:
    dims = struct.pack(f"<{len(shape)}I", *shape)
    return struct.pack("<4sBBH", MAGIC, dtype_code, len(shape), 0) + dims


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write `array` (float32 or float64) to `path` in container format."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _CODE_FOR_DTYPE:
        raise TensorFormatError(f"unsupported dtype {arr.dtype} for tensor file {path}")
    code = _CODE_FOR_DTYPE[arr.dtype]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header_bytes(code, arr.shape))
        fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))


def read_header(path: str | Path) -> tuple[int, tuple[int, ...], int]:
    """Return (dtype_code, shape, header_length) without reading the payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        fixed = fh.read(8)
        if len(fixed) < 8:
            raise TensorFormatError(f"tensor file {path} truncated before header end")
        magic, code, ndim, reserved = struct.unpack("<4sBBH", fixed)
        if magic != MAGIC:
            raise TensorFormatError(f"tensor file {path} has bad magic {magic!r}")
        if code not in _DTYPE_CODES:
            raise TensorFormatError(f"tensor file {path} has unknown dtype code {code}")
        if reserved != 0:
            raise TensorFormatError(f"tensor file {path} has nonzero reserved field")
        dim_bytes = fh.read(4 * ndim)
        if len(dim_bytes) < 4 * ndim:
            raise TensorFormatError(f"tensor file {path} truncated inside dimension list")
        shape = struct.unpack(f"<{ndim}I", dim_bytes)
    return code, shape, 8 + 4 * ndim


def check_payload_size(path: str | Path, expected_shape: tuple[int, ...] | None = None) -> tuple[int, tuple[int, ...]]:
    """Validate header and payload byte length against the declared shape.

    Uses only stat + header read; the payload is not loaded. Returns
    (dtype_code, shape).
    """
    path = Path(path)
    code, shape, header_len = read_header(path)
    if expected_shape is not None and tuple(shape) != tuple(expected_shape):
        raise TensorFormatError(
            f"tensor file {path} declares shape {tuple(shape)} but record expects {tuple(expected_shape)}"
        )
    itemsize = _DTYPE_CODES[code].itemsize
    expected_payload = itemsize * int(np.prod(shape, dtype=np.int64))
    actual_payload = path.stat().st_size - header_len
    if actual_payload != expected_payload:
        raise TensorFormatError(
            f"tensor file {path}: payload is {actual_payload} bytes, "
            f"shape {tuple(shape)} requires {expected_payload}"
        )
    return code, shape


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file fully, validating header and payload length."""
    path = Path(path)
    code, shape = check_payload_size(path)
    dtype = _DTYPE_CODES[code]
    with open(path, "rb") as fh:
        fh.seek(8 + 4 * len(shape))
        data = fh.read()
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    arr = np.frombuffer(data, dtype=dtype, count=count)
    return arr.reshape(shape).copy()
