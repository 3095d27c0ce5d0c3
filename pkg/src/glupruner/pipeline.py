"""End-to-end pruning of MLP triplets and generic linear layers.

Gate/Up projections are pruned input-balanced (comparison groups are input
features, intermediate-neuron norms weight the scores); the Down projection
is pruned output-balanced with the Wanda metric fed intermediate norms.
Masks are produced over the transposed matrices, the orientation in which
row i of gate/up and column i of down belong to intermediate neuron i.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calibration import CalibStats
from .errors import ConfigError, DimensionError
from .glu import GluVariant, MlpWeights, mlp_forward
from .importance import (
    dass_down_scores,
    dass_gate_up_scores,
    magnitude_scores,
    wanda_scores,
)
from .masking import (
    GroupAxis,
    SparsityMask,
    SparsitySpec,
    apply_mask,
    make_mask,
    mask_sparsity,
)
from .tensor_store import Tensor2D


@dataclass(frozen=True)
class PruneConfig:
    variant: GluVariant
    spec: SparsitySpec
    metric: str = "dass"  # magnitude | wanda | dass
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.metric not in ("magnitude", "wanda", "dass"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class MlpMasks:
    """Masks over the transposed projections.

    gate/up: shape (d_int, d_hidden); down: shape (d_hidden, d_int).
    """

    gate: SparsityMask
    up: SparsityMask
    down: SparsityMask


def _with_axis(spec: SparsitySpec, axis: GroupAxis) -> SparsitySpec:
    return replace(spec, group_axis=axis)


def prune_mlp_dass(
    w: MlpWeights, stats: CalibStats, cfg: PruneConfig
) -> tuple[MlpMasks, MlpWeights]:
    """DaSS pruning of one MLP triplet: no weight updates, masks only."""
    if cfg.metric != "dass":
        raise ConfigError(f"prune_mlp_dass requires metric 'dass', got {cfg.metric!r}")
    return _prune_mlp(w, stats, cfg)


def prune_mlp(
    w: MlpWeights, stats: CalibStats, cfg: PruneConfig
) -> tuple[MlpMasks, MlpWeights]:
    """Prune one MLP triplet with the configured metric."""
    return _prune_mlp(w, stats, cfg)


def _prune_mlp(w, stats, cfg):
    ynorms = np.asarray(stats.intermediate_norms)
    xnorms = np.asarray(stats.input_norms)
    if ynorms.shape != (w.d_int,):
        raise DimensionError(
            f"intermediate_norms length {ynorms.shape} != d_int {w.d_int}"
        )
    if xnorms.shape != (w.d_hidden,):
        raise DimensionError(
            f"input_norms length {xnorms.shape} != d_hidden {w.d_hidden}"
        )
    gate_t, up_t, down_t = w.gate.transpose(), w.up.transpose(), w.down.transpose()

    if cfg.metric == "dass":
        # input-balanced for gate/up: groups are columns of W^T
        gu_axis = GroupAxis.PER_COLUMN
        gate_scores = dass_gate_up_scores(gate_t, ynorms, cfg.alpha)
        up_scores = dass_gate_up_scores(up_t, ynorms, cfg.alpha)
        down_scores = dass_down_scores(down_t, ynorms)
    elif cfg.metric == "wanda":
        gu_axis = GroupAxis.PER_ROW
        gate_scores = wanda_scores(gate_t, xnorms)
        up_scores = wanda_scores(up_t, xnorms)
        down_scores = wanda_scores(down_t, ynorms)
    else:  # magnitude
        gu_axis = GroupAxis.PER_ROW
        gate_scores = magnitude_scores(gate_t)
        up_scores = magnitude_scores(up_t)
        down_scores = magnitude_scores(down_t)

    gu_spec = _with_axis(cfg.spec, gu_axis)
    down_spec = _with_axis(cfg.spec, GroupAxis.PER_ROW)
    masks = MlpMasks(
        gate=make_mask(gate_scores, gu_spec),
        up=make_mask(up_scores, gu_spec),
        down=make_mask(down_scores, down_spec),
    )
    pruned = MlpWeights(
        gate=apply_mask(gate_t, masks.gate).transpose(),
        up=apply_mask(up_t, masks.up).transpose(),
        down=apply_mask(down_t, masks.down).transpose(),
        variant=w.variant,
    )
    return masks, pruned


def prune_linear_wanda(
    w: Tensor2D, input_norms: np.ndarray, spec: SparsitySpec
) -> tuple[SparsityMask, Tensor2D]:
    """Wanda pruning of a generic (d_out, d_in) linear layer, output-balanced."""
    scores = wanda_scores(w, input_norms)
    mask = make_mask(scores, _with_axis(spec, GroupAxis.PER_ROW))
    return mask, apply_mask(w, mask)


@dataclass(frozen=True)
class DependencyGroupReport:
    """Per-neuron kept fractions and cross-projection alignment."""

    gate_kept_fraction: np.ndarray
    up_kept_fraction: np.ndarray
    down_kept_fraction: np.ndarray
    gate_down_correlation: float | None  # None when a vector has zero variance
    up_down_correlation: float | None

    def to_dict(self) -> dict:
        return {
            "gate_kept_fraction": self.gate_kept_fraction.tolist(),
            "up_kept_fraction": self.up_kept_fraction.tolist(),
            "down_kept_fraction": self.down_kept_fraction.tolist(),
            "gate_down_correlation": self.gate_down_correlation,
            "up_down_correlation": self.up_down_correlation,
        }


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    if np.std(a) == 0.0 or np.std(b) == 0.0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def dependency_report(masks: MlpMasks) -> DependencyGroupReport:
    """Quantify how well the three masks agree on which neurons matter.

    For each intermediate neuron i: kept fraction of row i of the transposed
    gate and up masks and of column i of the transposed down mask.
    """
    g, u, d = masks.gate.keep, masks.up.keep, masks.down.keep
    if g.shape != u.shape or d.shape != (g.shape[1], g.shape[0]):
        raise DimensionError(
            f"mask shapes inconsistent: gate {g.shape}, up {u.shape}, down {d.shape}"
        )
    gate_frac = g.mean(axis=1)
    up_frac = u.mean(axis=1)
    down_frac = d.mean(axis=0)
    return DependencyGroupReport(
        gate_kept_fraction=gate_frac,
        up_kept_fraction=up_frac,
        down_kept_fraction=down_frac,
        gate_down_correlation=_pearson(gate_frac, down_frac),
        up_down_correlation=_pearson(up_frac, down_frac),
    )


@dataclass(frozen=True)
class EvalReport:
    """Reconstruction error of the pruned MLP on a calibration stream."""

    frobenius_error: float
    relative_error: float
    gate_sparsity: float
    up_sparsity: float
    down_sparsity: float

    def to_dict(self) -> dict:
        return {
            "frobenius_error": self.frobenius_error,
            "relative_error": self.relative_error,
            "gate_sparsity": self.gate_sparsity,
            "up_sparsity": self.up_sparsity,
            "down_sparsity": self.down_sparsity,
        }


def _zero_fraction(t: Tensor2D) -> float:
    return float(np.count_nonzero(t.data == 0.0)) / t.data.size


def eval_reconstruction(
    dense: MlpWeights, pruned: MlpWeights, batches
) -> EvalReport:
    """Frobenius distance between dense and pruned MLP outputs."""
    if (dense.d_hidden, dense.d_int) != (pruned.d_hidden, pruned.d_int):
        raise DimensionError("dense and pruned weights have different shapes")
    err_sq = 0.0
    ref_sq = 0.0
    tokens = 0
    for batch in batches:
        if batch.rows == 0:
            continue
        _, z_dense = mlp_forward(dense, batch)
        _, z_pruned = mlp_forward(pruned, batch)
        diff = z_dense.data.astype(np.float64) - z_pruned.data.astype(np.float64)
        err_sq += float(np.sum(diff * diff))
        ref_sq += float(np.sum(z_dense.data.astype(np.float64) ** 2))
        tokens += batch.rows
    if tokens == 0:
        raise DimensionError("reconstruction evaluation needs at least one token")
    fro = float(np.sqrt(err_sq))
    rel = fro / float(np.sqrt(ref_sq)) if ref_sq > 0 else (0.0 if fro == 0 else float("inf"))
    return EvalReport(
        frobenius_error=fro,
        relative_error=rel,
        gate_sparsity=_zero_fraction(pruned.gate),
        up_sparsity=_zero_fraction(pruned.up),
        down_sparsity=_zero_fraction(pruned.down),
    )


def masks_sparsity_summary(masks: MlpMasks) -> dict:
    return {
        "gate": mask_sparsity(masks.gate),
        "up": mask_sparsity(masks.up),
        "down": mask_sparsity(masks.down),
    }
