"""Importance-score matrices for magnitude, Wanda, and DaSS pruning metrics."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor_store import Tensor2D


class Metric(enum.Enum):
    MAGNITUDE = "magnitude"
    WANDA = "wanda"
    DASS_GATE_UP = "dass_gate_up"
    DASS_DOWN = "dass_down"


@dataclass(frozen=True)
class ImportanceMatrix:
    """Nonnegative scores, same shape as the scored weight matrix."""

    scores: Tensor2D
    metric: Metric
    alpha: float = 0.0


def magnitude_scores(w: Tensor2D) -> ImportanceMatrix:
    """scores[i, j] = |w[i, j]|."""
    return ImportanceMatrix(Tensor2D(np.abs(w.data)), Metric.MAGNITUDE)


def wanda_scores(w: Tensor2D, input_norms: np.ndarray) -> ImportanceMatrix:
    """Weight magnitude times the L2 norm of its input feature.

    w is (d_out, d_in); input_norms has length d_in.
    """
    norms = np.asarray(input_norms, dtype=np.float32)
    if norms.shape != (w.cols,):
        raise DimensionError(
            f"input_norms length {norms.shape} != weight columns {w.cols}"
        )
    return ImportanceMatrix(
        Tensor2D(np.abs(w.data) * norms[np.newaxis, :]), Metric.WANDA
    )


def dass_gate_up_scores(
    w_t: Tensor2D, intermediate_norms: np.ndarray, alpha: float
) -> ImportanceMatrix:
    """DaSS metric for transposed Gate/Up projections.

    w_t is (d_int, d_hidden); row i belongs to intermediate neuron i and is
    weighted by that neuron's activation norm raised to alpha. 0**0 is
    defined as 1 so alpha=0 reduces exactly to magnitude.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be nonnegative, got {alpha}")
    norms = np.asarray(intermediate_norms, dtype=np.float32)
    if norms.shape != (w_t.rows,):
        raise DimensionError(
            f"intermediate_norms length {norms.shape} != weight rows {w_t.rows}"
        )
    if alpha == 0.0:
        weighted = np.ones_like(norms)
    else:
        weighted = np.power(norms, np.float32(alpha))
    return ImportanceMatrix(
        Tensor2D(np.abs(w_t.data) * weighted[:, np.newaxis]),
        Metric.DASS_GATE_UP,
        alpha=alpha,
    )


def dass_down_scores(w_t: Tensor2D, intermediate_norms: np.ndarray) -> ImportanceMatrix:
    """DaSS metric for the transposed Down projection.

    w_t is (d_hidden, d_int); numerically identical to wanda_scores fed the
    intermediate norms.
    """
    inner = wanda_scores(w_t, intermediate_norms)
    return ImportanceMatrix(inner.scores, Metric.DASS_DOWN)
