"""Streaming per-feature L2 activation norms over calibration tokens.

Two norm vectors are collected in one pass over the calibration stream:
input-feature norms of the hidden states feeding the MLP, and norms of the
gated intermediate activations computed with the dense (unpruned) weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DimensionError, EmptyCalibrationError
from .glu import MlpWeights, mlp_forward
from .tensor_store import Tensor2D, TensorFile


@dataclass
class NormAccumulator:
    """Running sum of squares per feature, in float64."""

    dim: int
    sumsq: np.ndarray = field(default=None)  # type: ignore[assignment]
    token_count: int = 0

    def __post_init__(self):
        if self.sumsq is None:
            self.sumsq = np.zeros(self.dim, dtype=np.float64)
        else:
            self.sumsq = np.asarray(self.sumsq, dtype=np.float64)
            if self.sumsq.shape != (self.dim,):
                raise DimensionError(
                    f"sumsq length {self.sumsq.shape} != dim {self.dim}"
                )


def accumulate(acc: NormAccumulator, batch: Tensor2D) -> NormAccumulator:
    """Fold a (T, dim) batch of token rows into the accumulator."""
    if batch.cols != acc.dim:
        raise DimensionError(f"batch has {batch.cols} features, accumulator {acc.dim}")
    x64 = batch.data.astype(np.float64)
    return NormAccumulator(
        dim=acc.dim,
        sumsq=acc.sumsq + np.sum(x64 * x64, axis=0),
        token_count=acc.token_count + batch.rows,
    )


def merge(a: NormAccumulator, b: NormAccumulator) -> NormAccumulator:
    """Combine partial accumulators; associative and commutative."""
    if a.dim != b.dim:
        raise DimensionError(f"accumulator dims differ: {a.dim} vs {b.dim}")
    return NormAccumulator(
        dim=a.dim, sumsq=a.sumsq + b.sumsq, token_count=a.token_count + b.token_count
    )


def finalize(acc: NormAccumulator) -> np.ndarray:
    """Per-feature L2 norms: sqrt of accumulated sums of squares."""
    return np.sqrt(acc.sumsq)


@dataclass(frozen=True)
class CalibStats:
    """Finalized calibration statistics for one MLP layer."""

    input_norms: np.ndarray  # length d_hidden
    intermediate_norms: np.ndarray  # length d_int
    token_count: int


def calibrate_mlp(w: MlpWeights, batches: Iterable[Tensor2D]) -> CalibStats:
    """Accumulate input and intermediate norms over a stream of batches.

    Intermediate activations are computed with the dense weights; statistics
    are independent of how tokens are split into batches.
    """
    in_acc = NormAccumulator(dim=w.d_hidden)
    mid_acc = NormAccumulator(dim=w.d_int)
    for batch in batches:
        if batch.rows == 0:
            continue
        y, _ = mlp_forward(w, batch)
        in_acc = accumulate(in_acc, batch)
        mid_acc = accumulate(mid_acc, y)
    if in_acc.token_count == 0:
        raise EmptyCalibrationError("calibration stream contained zero tokens")
    return CalibStats(
        input_norms=finalize(in_acc),
        intermediate_norms=finalize(mid_acc),
        token_count=in_acc.token_count,
    )


def calibrate_linear(batches: Iterable[Tensor2D], dim: int) -> tuple[np.ndarray, int]:
    """Input-feature norms only, for pruning a generic linear layer."""
    acc = NormAccumulator(dim=dim)
    for batch in batches:
        if batch.rows == 0:
            continue
        acc = accumulate(acc, batch)
    if acc.token_count == 0:
        raise EmptyCalibrationError("calibration stream contained zero tokens")
    return finalize(acc), acc.token_count


def batches_from_tensor_file(tf: TensorFile, prefix: str = "x.") -> list[Tensor2D]:
    """Calibration batches stored as tensors named '<prefix><k>', k ascending."""
    keyed = []
    for name, t in tf.entries.items():
        if name.startswith(prefix) and name[len(prefix) :].isdigit():
            keyed.append((int(name[len(prefix) :]), t))
    keyed.sort(key=lambda kv: kv[0])
    return [t for _, t in keyed]


def synthetic_batches(
    tokens: int,
    dim: int,
    outliers: int = 0,
    scale: float = 1.0,
    seed: int = 0,
    batch_tokens: int = 2048,
) -> Iterator[Tensor2D]:
    """Seeded Gaussian calibration stream with optional heavy-tail columns.

    `outliers` columns (chosen by the same seed) are multiplied by `scale`.
    The stream is byte-reproducible for a fixed argument tuple.
    """
    if tokens <= 0:
        raise EmptyCalibrationError("synthetic stream needs at least one token")
    rng = np.random.default_rng(seed)
    cols = rng.choice(dim, size=min(outliers, dim), replace=False)
    produced = 0
    while produced < tokens:
        t = min(batch_tokens, tokens - produced)
        batch = rng.standard_normal((t, dim)).astype(np.float32)
        if len(cols):
            batch[:, cols] *= np.float32(scale)
        produced += t
        yield Tensor2D(batch)
