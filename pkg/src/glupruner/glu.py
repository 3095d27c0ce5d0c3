"""Reference forward pass for GLU-variant MLP blocks.

The block computes the gated intermediate y = sigma(x @ gate) * (x @ up)
followed by z = y @ down. Both y and z are returned because calibration
needs the intermediate activations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, expit

from .errors import DimensionError
from .tensor_store import Tensor2D


class GluVariant(enum.Enum):
    SWIGLU = "swiglu"
    GEGLU = "geglu"
    REGLU = "reglu"

    @classmethod
    def parse(cls, name: str) -> "GluVariant":
        return cls(name.strip().lower())


def activation(variant: GluVariant, t):
    """Apply the gating nonlinearity elementwise.

    SiLU(t) = t * sigmoid(t); GeLU uses the exact Gaussian-CDF form
    t * Phi(t); ReLU(t) = max(0, t). Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=np.float64)
    if variant is GluVariant.SWIGLU:
        out = t * expit(t)
    elif variant is GluVariant.GEGLU:
        out = t * 0.5 * (1.0 + erf(t / np.sqrt(2.0)))
    elif variant is GluVariant.REGLU:
        out = np.maximum(t, 0.0)
    else:  # pragma: no cover
        raise ValueError(f"unknown variant {variant}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MlpWeights:
    """Gate/Up/Down projection triplet with consistent dimensions.

    gate and up have shape (d_hidden, d_int); down has shape
    (d_int, d_hidden), matching z = (sigma(x@gate) * (x@up)) @ down.
    """

    gate: Tensor2D
    up: Tensor2D
    down: Tensor2D
    variant: GluVariant

    def __post_init__(self):
        if self.gate.shape != self.up.shape:
            raise DimensionError(
                f"gate {self.gate.shape} and up {self.up.shape} must have equal shape"
            )
        if self.down.shape != (self.gate.cols, self.gate.rows):
            raise DimensionError(
                f"down {self.down.shape} incompatible with gate {self.gate.shape}; "
                f"expected ({self.gate.cols}, {self.gate.rows})"
            )

    @property
    def d_hidden(self) -> int:
        return self.gate.rows

    @property
    def d_int(self) -> int:
        return self.gate.cols


def _matmul64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # float32 operands, float64 accumulation, float32 result
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def mlp_forward(w: MlpWeights, x: Tensor2D) -> tuple[Tensor2D, Tensor2D]:
    """Run the MLP block on token rows x of shape (L, d_hidden).

    Returns (y, z): the gated intermediate of shape (L, d_int) and the
    output of shape (L, d_hidden).
    """
    if x.cols != w.d_hidden:
        raise DimensionError(
            f"input has {x.cols} features, weights expect {w.d_hidden}"
        )
    pre_gate = _matmul64(x.data, w.gate.data)
    pre_up = _matmul64(x.data, w.up.data)
    y = (activation(w.variant, pre_gate) * pre_up.astype(np.float64)).astype(
        np.float32
    )
    z = _matmul64(y, w.down.data)
    return Tensor2D(y), Tensor2D(z)
