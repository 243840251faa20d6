"""Dense-array substrate shared by every other module.

Arrays are plain ``numpy.ndarray`` objects. Float64 is the correctness
dtype; float32 is only used by the benchmark. Nothing here broadcasts
implicitly across mismatched shapes: callers adapt shapes themselves.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

import numpy as np

from .errors import NonFiniteError, ShapeMismatch, ValidationError

F64 = np.float64
F32 = np.float32
DTYPES = {"f64": F64, "f32": F32}
_DTYPE_NAMES = {np.dtype(F64): "f64", np.dtype(F32): "f32"}


def as_dtype(name: str) -> np.dtype:
    try:
        return np.dtype(DTYPES[name])
    except KeyError:
        raise ValidationError(f"unsupported dtype {name!r}; expected one of {sorted(DTYPES)}") from None


def dtype_name(dtype) -> str:
    return _DTYPE_NAMES[np.dtype(dtype)]


# --------------------------------------------------------------------------
# RNG

def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical streams on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


# --------------------------------------------------------------------------
# Index arithmetic (the single row-major convention used everywhere)

def flat_index(coords: Iterable[int], shape: Iterable[int]) -> int:
    coords, shape = tuple(coords), tuple(shape)
    if len(coords) != len(shape):
        raise ShapeMismatch(f"rank mismatch: coords {coords} vs shape {shape}")
    idx = 0
    for c, s in zip(coords, shape):
        if not 0 <= c < s:
            raise IndexError(f"coordinate {c} out of range for extent {s}")
        idx = idx * s + c
    return idx


def unravel_index(index: int, shape: Iterable[int]) -> tuple[int, ...]:
    shape = tuple(shape)
    total = int(np.prod(shape, dtype=np.int64))
    if not 0 <= index < total:
        raise IndexError(f"flat index {index} out of range for shape {shape}")
    coords = []
    for s in reversed(shape):
        coords.append(index % s)
        index //= s
    return tuple(reversed(coords))


# --------------------------------------------------------------------------
# Checked primitives

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def reverse_seq(x: np.ndarray) -> np.ndarray:
    """Reverse the leading (time) axis. Bit-exact, returns a fresh array."""
    if x.ndim < 1:
        raise ShapeMismatch("reverse_seq needs at least one axis")
    return np.ascontiguousarray(x[::-1])


def concat(parts: Iterable[np.ndarray], axis: int = 0) -> np.ndarray:
    parts = list(parts)
    try:
        return np.concatenate(parts, axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None


def check_shape(x: np.ndarray, shape: tuple, what: str = "array") -> None:
    if tuple(x.shape) != tuple(shape):
        raise ShapeMismatch(f"{what}: expected shape {tuple(shape)}, got {tuple(x.shape)}")


def ensure_finite(x: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


# --------------------------------------------------------------------------
# Activations

def softplus(x):
    """ln(1 + e^x); logaddexp never overflows for large x."""
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def tanh(x):
    return np.tanh(x)


# --------------------------------------------------------------------------
# Comparison

def rel_err(actual: np.ndarray, expected: np.ndarray, floor: float = 1e-12) -> float:
    """max|actual - expected| scaled by max|expected| (tensor-scale relative)."""
    actual = np.asarray(actual, dtype=F64)
    expected = np.asarray(expected, dtype=F64)
    if actual.shape != expected.shape:
        raise ShapeMismatch(f"rel_err: {actual.shape} vs {expected.shape}")
    if actual.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(expected))), floor)
    return float(np.max(np.abs(actual - expected))) / scale


# --------------------------------------------------------------------------
# Container serialization
#
# Each entry is: <u32 little-endian header length> <UTF-8 JSON header> "\n"
# <little-endian raw values, row-major>. The header length counts the JSON
# bytes plus the newline. Entries are simply concatenated.

_LEN = struct.Struct("<I")


def write_arrays(stream: BinaryIO, arrays: Mapping[str, np.ndarray]) -> None:
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if np.dtype(arr.dtype) not in _DTYPE_NAMES:
            raise ValidationError(f"{name}: unsupported dtype {arr.dtype}")
        header = {"name": name, "shape": list(arr.shape), "dtype": dtype_name(arr.dtype)}
        raw_header = json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n"
        stream.write(_LEN.pack(len(raw_header)))
        stream.write(raw_header)
        stream.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_arrays(stream: BinaryIO) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    while True:
        prefix = stream.read(_LEN.size)
        if not prefix:
            return out
        if len(prefix) != _LEN.size:
            raise ValidationError("truncated entry length prefix")
        (n,) = _LEN.unpack(prefix)
        raw_header = stream.read(n)
        if len(raw_header) != n or not raw_header.endswith(b"\n"):
            raise ValidationError("truncated or malformed entry header")
        try:
            header = json.loads(raw_header[:-1].decode("utf-8"))
            name, shape, dt = header["name"], tuple(header["shape"]), header["dtype"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"unreadable entry header: {exc}") from None
        dtype = as_dtype(dt).newbyteorder("<")
        count = int(np.prod(shape, dtype=np.int64))
        raw = stream.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise ValidationError(f"{name}: truncated data")
        out[name] = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="))\
            .reshape(shape)


def dumps(arrays: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write_arrays(buf, arrays)
    return buf.getvalue()


def loads(data: bytes) -> dict[str, np.ndarray]:
    return read_arrays(io.BytesIO(data))


def save(path: str | Path, arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        write_arrays(fh, arrays)


def load(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_arrays(fh)
