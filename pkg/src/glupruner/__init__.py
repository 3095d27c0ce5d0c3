"""Dependency-aware semi-structured sparsity pruning for GLU MLP triplets."""

__version__ = "0.1.0"

from .calibration import CalibStats, NormAccumulator, accumulate, calibrate_mlp, finalize
from .glu import GluVariant, MlpWeights, activation, mlp_forward
from .importance import (
    ImportanceMatrix,
    Metric,
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
    mask_sparsity,
    nm_mask,
    topk_mask,
    validate_mask,
)
from .pipeline import (
    DependencyGroupReport,
    EvalReport,
    MlpMasks,
    PruneConfig,
    dependency_report,
    eval_reconstruction,
    prune_linear_wanda,
    prune_mlp,
    prune_mlp_dass,
)
from .sparse_exec import NmCompressed, bench, decode, encode, spmv
from .tensor_store import Tensor2D, TensorFile, load_tensor_file, save_tensor_file

__all__ = [
    "CalibStats",
    "NormAccumulator",
    "accumulate",
    "calibrate_mlp",
    "finalize",
    "GluVariant",
    "MlpWeights",
    "activation",
    "mlp_forward",
    "ImportanceMatrix",
    "Metric",
    "dass_down_scores",
    "dass_gate_up_scores",
    "magnitude_scores",
    "wanda_scores",
    "GroupAxis",
    "SparsityMask",
    "SparsitySpec",
    "apply_mask",
    "mask_sparsity",
    "nm_mask",
    "topk_mask",
    "validate_mask",
    "DependencyGroupReport",
    "EvalReport",
    "MlpMasks",
    "PruneConfig",
    "dependency_report",
    "eval_reconstruction",
    "prune_linear_wanda",
    "prune_mlp",
    "prune_mlp_dass",
    "NmCompressed",
    "bench",
    "decode",
    "encode",
    "spmv",
    "Tensor2D",
    "TensorFile",
    "load_tensor_file",
    "save_tensor_file",
]
