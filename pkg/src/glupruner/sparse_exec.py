"""Compressed storage and execution of N:M-pruned matrices.

Windows of m consecutive entries run along each row of the logical dense
matrix. Kept values are packed densely; their in-window positions are stored
as 2-bit (m <= 4) or 3-bit (m <= 8) codes packed little-endian, mirroring
hardware 2:4 metadata layouts.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConstraintError, DimensionError, FormatError
from .masking import SparsityMask
from .tensor_store import Tensor2D, TensorFile, load_tensor_file, save_tensor_file

_NMIDX_MAGIC = b"NMIX"


def _code_bits(m: int) -> int:
    if m <= 4:
        return 2
    if m <= 8:
        return 3
    raise ConfigError(f"m={m} not supported; index codes cover m <= 8 only")


def _pack_codes(codes: np.ndarray, bits: int) -> bytes:
    codes = codes.astype(np.uint8).ravel()
    bit_rows = (codes[:, np.newaxis] >> np.arange(bits, dtype=np.uint8)) & 1
    return np.packbits(bit_rows.ravel(), bitorder="little").tobytes()

def _unpack_codes(raw: bytes, bits: int, count: int) -> np.ndarray:
    flat = np.unpackbits(
        np.frombuffer(raw, dtype=np.uint8), bitorder="little", count=count * bits
    )
    return flat.reshape(count, bits) @ (1 << np.arange(bits, dtype=np.uint32))


@dataclass
class NmCompressed:
    """N:M-pruned matrix with packed values and per-window position codes."""

    n: int
    m: int
    rows: int
    cols: int
    values: np.ndarray  # float32, length rows * cols * (m - n) / m
    indices: bytes  # packed position codes

    _cols_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def kept_per_window(self) -> int:
        return self.m - self.n

    @property
    def windows_per_row(self) -> int:
        return self.cols // self.m

    def positions(self) -> np.ndarray:
        """Per-window position codes, shape (rows, windows, kept)."""
        count = self.rows * self.windows_per_row * self.kept_per_window
        pos = _unpack_codes(self.indices, _code_bits(self.m), count)
        return pos.reshape(self.rows, self.windows_per_row, self.kept_per_window)

    def _column_indices(self) -> np.ndarray:
        if self._cols_cache is None:
            base = np.arange(self.windows_per_row, dtype=np.int64) * self.m
            self._cols_cache = self.positions().astype(np.int64) + base[
                np.newaxis, :, np.newaxis
            ]
        return self._cols_cache


def encode(w: Tensor2D, mask: SparsityMask) -> NmCompressed:
    """Pack the kept entries of w under an N:M mask; lossless.

    Windows are aligned segments of m consecutive entries along each row;
    every window must keep exactly m - n entries.
    """
    spec = mask.spec
    if not spec.is_nm:
        raise ConstraintError("encode requires an N:M mask")
    if w.shape != mask.shape:
        raise DimensionError(f"weight shape {w.shape} != mask shape {mask.shape}")
    n, m = spec.n, spec.m
    if w.cols % m != 0:
        raise ConstraintError(f"cols {w.cols} not divisible by m={m}")
    keep_w = mask.keep.reshape(w.rows, w.cols // m, m)
    if not np.all(keep_w.sum(axis=2) == m - n):
        raise ConstraintError(
            f"mask violates {n}:{m} pattern along rows: some window does not "
            f"keep exactly {m - n} entries"
        )
    # kept positions in ascending order within each window
    pos = np.argsort(~keep_w, axis=2, kind="stable")[:, :, : m - n]
    vals = np.take_along_axis(w.data.reshape(keep_w.shape), pos, axis=2)
    return NmCompressed(
        n=n,
        m=m,
        rows=w.rows,
        cols=w.cols,
        values=np.ascontiguousarray(vals, dtype=np.float32).ravel(),
        indices=_pack_codes(pos, _code_bits(m)),
    )


def decode(c: NmCompressed) -> Tensor2D:
    """Reconstruct the masked dense matrix, bit-exact."""
    dense = np.zeros((c.rows, c.windows_per_row, c.m), dtype=np.float32)
    vals = c.values.reshape(c.rows, c.windows_per_row, c.kept_per_window)
    np.put_along_axis(dense, c.positions().astype(np.int64), vals, axis=2)
    return Tensor2D(dense.reshape(c.rows, c.cols))


def spmv(c: NmCompressed, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product of the compressed matrix with x (length cols)."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (c.cols,):
        raise DimensionError(f"vector length {x.shape} != cols {c.cols}")
    gathered = x[c._column_indices()]
    vals = c.values.reshape(c.rows, c.windows_per_row, c.kept_per_window)
    return np.einsum(
        "rwk,rwk->r", vals.astype(np.float64), gathered.astype(np.float64)
    ).astype(np.float32)


def bench(c: NmCompressed, dense: Tensor2D, iters: int) -> dict:
    """Median wall-clock matvec timings; informational only."""
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    if dense.shape != (c.rows, c.cols):
        raise DimensionError(f"dense shape {dense.shape} != ({c.rows}, {c.cols})")
    rng = np.random.default_rng(0)
    x = rng.standard_normal(c.cols).astype(np.float32)
    c._column_indices()  # warm the gather index cache outside the timed loop

    def _median_ns(fn) -> float:
        samples = []
        for _ in range(iters):
            t0 = time.perf_counter_ns()
            fn()
            samples.append(time.perf_counter_ns() - t0)
        return float(np.median(samples))

    w = dense.data
    dense_ns = _median_ns(lambda: w @ x)
    sparse_ns = _median_ns(lambda: spmv(c, x))
    return {
        "dense_ns": dense_ns,
        "sparse_ns": sparse_ns,
        "speedup": dense_ns / sparse_ns,
    }


def save_compressed(c: NmCompressed, path) -> None:
    """Write values as a safetensors file plus a '<path>.nmidx' sidecar.

    Sidecar layout: magic "NMIX", u32 n, u32 m, u64 rows, u64 cols, then the
    packed position codes.
    """
    vals = Tensor2D(c.values.reshape(c.rows, c.windows_per_row * c.kept_per_window))
    tf = TensorFile(
        entries={"values": vals},
        metadata={"n": str(c.n), "m": str(c.m), "rows": str(c.rows), "cols": str(c.cols)},
    )
    save_tensor_file(tf, path)
    with open(str(path) + ".nmidx", "wb") as fh:
        fh.write(_NMIDX_MAGIC)
        fh.write(struct.pack("<IIQQ", c.n, c.m, c.rows, c.cols))
        fh.write(c.indices)


def load_compressed(path) -> NmCompressed:
    tf = load_tensor_file(path)
    if "values" not in tf.entries:
        raise FormatError(f"{path}: missing 'values' tensor")
    with open(str(path) + ".nmidx", "rb") as fh:
        blob = fh.read()
    if blob[:4] != _NMIDX_MAGIC:
        raise FormatError(f"{path}.nmidx: bad magic")
    n, m, rows, cols = struct.unpack("<IIQQ", blob[4:28])
    c = NmCompressed(
        n=n,
        m=m,
        rows=rows,
        cols=cols,
        values=tf.entries["values"].data.ravel(),
        indices=blob[28:],
    )
    if c.values.size != rows * (cols // m) * (m - n):
        raise FormatError(f"{path}: values size inconsistent with {n}:{m} shape")
    return c
