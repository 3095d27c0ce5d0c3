"""Dense 2-D float32 tensors and bit-exact safetensors container I/O.

All weights and activations move through :class:`Tensor2D`, a thin immutable
wrapper around a C-contiguous float32 numpy array. Files use the safetensors
layout: an 8-byte little-endian header length, a JSON header mapping tensor
names to ``{"dtype", "shape", "data_offsets"}``, then the raw payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    FormatError,
    UnsupportedDtypeError,
    UnsupportedShapeError,
)

_HEADER_LEN_BYTES = 8
_MAX_HEADER_LEN = 100 * 1024 * 1024


@dataclass(frozen=True)
class Tensor2D:
    """Row-major 2-D matrix of finite float32 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise UnsupportedShapeError(
                f"Tensor2D requires 2 dimensions, got {arr.ndim}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UnsupportedShapeError(f"Tensor2D dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("Tensor2D payload contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_list(cls, rows: int, cols: int, values) -> "Tensor2D":
        arr = np.asarray(values, dtype=np.float32).reshape(rows, cols)
        return cls(arr)

    def transpose(self) -> "Tensor2D":
        return Tensor2D(np.ascontiguousarray(self.data.T))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor2D):
            return NotImplemented
        return self.shape == other.shape and bool(
            np.array_equal(
                self.data.view(np.uint32), other.data.view(np.uint32)
            )
        )

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


@dataclass
class TensorFile:
    """Named collection of Tensor2D plus optional string metadata."""

    entries: dict[str, Tensor2D] = field(default_factory=dict)
    metadata: dict[str, str] | None = None

    def __post_init__(self):
        for name in self.entries:
            if not name:
                raise FormatError("tensor names must be non-empty")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorFile):
            return NotImplemented
        return self.entries == other.entries and self.metadata == other.metadata


def _widen(raw: bytes, dtype: str, name: str) -> np.ndarray:
    if dtype == "F32":
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)
    if dtype == "F16":
        return np.frombuffer(raw, dtype="<f2").astype(np.float32)
    if dtype == "BF16":
        # bf16 is the top half of an f32; shift into the high 16 bits.
        u16 = np.frombuffer(raw, dtype="<u2").astype(np.uint32)
        return (u16 << 16).view(np.float32).astype(np.float32)
    raise UnsupportedDtypeError(f"tensor {name!r}: unsupported dtype {dtype!r}")


_DTYPE_SIZE = {"F32": 4, "F16": 2, "BF16": 2}


def load_tensor_file(path) -> TensorFile:
    """Read a safetensors file, widening half-precision tensors to float32.

    Accepts only 1-D (admitted as 1xN) and 2-D float tensors. Raises
    FormatError for structural damage, UnsupportedDtypeError /
    UnsupportedShapeError / DataError naming the offending tensor.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_LEN_BYTES:
        raise FormatError(f"{path}: file too short for 8-byte header length")
    (header_len,) = struct.unpack("<Q", blob[:_HEADER_LEN_BYTES])
    if header_len > _MAX_HEADER_LEN or _HEADER_LEN_BYTES + header_len > len(blob):
        raise FormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[_HEADER_LEN_BYTES : _HEADER_LEN_BYTES + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header JSON is not an object")

    payload = blob[_HEADER_LEN_BYTES + header_len :]
    metadata = None
    entries: dict[str, Tensor2D] = {}
    spans: list[tuple[int, int]] = []
    for name, desc in header.items():
        if name == "__metadata__":
            if not isinstance(desc, dict):
                raise FormatError(f"{path}: __metadata__ is not an object")
            metadata = {str(k): str(v) for k, v in desc.items()}
            continue
        if not isinstance(desc, dict):
            raise FormatError(f"{path}: entry {name!r} is not an object")
        try:
            dtype = desc["dtype"]
            shape = desc["shape"]
            begin, end = desc["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: entry {name!r} missing fields: {exc}") from exc
        if dtype not in _DTYPE_SIZE:
            raise UnsupportedDtypeError(
                f"{path}: tensor {name!r}: unsupported dtype {dtype!r}"
            )
        if not isinstance(shape, list) or not all(
            isinstance(d, int) and d >= 0 for d in shape
        ):
            raise FormatError(f"{path}: tensor {name!r}: bad shape {shape!r}")
        if len(shape) == 1:
            rows, cols = 1, shape[0]
        elif len(shape) == 2:
            rows, cols = shape
        else:
            raise UnsupportedShapeError(
                f"{path}: tensor {name!r}: {len(shape)}-D not supported"
            )
        if rows < 1 or cols < 1:
            raise UnsupportedShapeError(f"{path}: tensor {name!r}: empty shape {shape}")
        nbytes = rows * cols * _DTYPE_SIZE[dtype]
        if (
            not isinstance(begin, int)
            or not isinstance(end, int)
            or begin < 0
            or end > len(payload)
            or end - begin != nbytes
        ):
            raise FormatError(
                f"{path}: tensor {name!r}: data_offsets [{begin}, {end}] "
                f"inconsistent with shape {shape} and payload size {len(payload)}"
            )
        spans.append((begin, end))
        values = _widen(payload[begin:end], dtype, name)
        if not np.all(np.isfinite(values)):
            raise DataError(f"{path}: tensor {name!r}: payload contains NaN or Inf")
        entries[name] = Tensor2D(values.reshape(rows, cols))

    spans.sort()
    for (b0, e0), (b1, _) in zip(spans, spans[1:]):
        if b1 < e0:
            raise FormatError(f"{path}: overlapping data_offsets")
    return TensorFile(entries=entries, metadata=metadata)


def save_tensor_file(tf: TensorFile, path) -> None:
    """Write a TensorFile as an F32 safetensors container.

    load_tensor_file(save_tensor_file(tf)) reproduces tf bit-exactly.
    """
    header: dict = {}
    if tf.metadata is not None:
        header["__metadata__"] = dict(tf.metadata)
    offset = 0
    chunks = []
    for name in tf.entries:
        t = tf.entries[name]
        raw = t.data.astype("<f4").tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": [t.rows, t.cols],
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)
