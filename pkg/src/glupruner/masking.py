"""Keep/prune masks under comparison-group semantics.

Groups run along rows (PerRow) or columns (PerColumn). Unstructured masks
prune floor(s * group_len) entries per group line; N:M masks prune exactly
n entries in every aligned window of m consecutive entries along each group
line. Ties break toward pruning the lower index, so masks are deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConstraintError, DimensionError, ShapeError
from .importance import ImportanceMatrix
from .tensor_store import Tensor2D


class GroupAxis(enum.Enum):
    PER_ROW = "per_row"
    PER_COLUMN = "per_column"


@dataclass(frozen=True)
class SparsitySpec:
    """Sparsity pattern: unstructured ratio s, or N zeros per M consecutive."""

    group_axis: GroupAxis
    s: float | None = None
    n: int | None = None
    m: int | None = None

    def __post_init__(self):
        if self.is_nm == (self.s is not None):
            raise ConfigError("specify exactly one of s or (n, m)")
        if self.s is not None and not 0.0 <= self.s < 1.0:
            raise ConfigError(f"sparsity ratio must be in [0, 1), got {self.s}")
        if self.is_nm:
            if self.n is None or self.m is None:
                raise ConfigError("N:M spec requires both n and m")
            if self.n < 1 or self.m < 1 or self.n >= self.m:
                raise ConfigError(f"N:M requires 0 < n < m, got {self.n}:{self.m}")

    @property
    def is_nm(self) -> bool:
        return self.n is not None or self.m is not None

    @classmethod
    def unstructured(cls, s: float, group_axis: GroupAxis) -> "SparsitySpec":
        return cls(group_axis=group_axis, s=s)

    @classmethod
    def nm(cls, n: int, m: int, group_axis: GroupAxis) -> "SparsitySpec":
        return cls(group_axis=group_axis, n=n, m=m)


@dataclass(frozen=True)
class SparsityMask:
    """Boolean keep matrix plus the pattern it satisfies."""

    keep: np.ndarray
    spec: SparsitySpec

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=bool)
        keep.setflags(write=False)
        object.__setattr__(self, "keep", keep)

    @property
    def shape(self) -> tuple[int, int]:
        return self.keep.shape


def _group_lines(scores: np.ndarray, axis: GroupAxis) -> np.ndarray:
    # view with group lines as rows
    return scores if axis is GroupAxis.PER_ROW else scores.T


def topk_mask(scores: ImportanceMatrix, spec: SparsitySpec) -> SparsityMask:
    """Prune the floor(s * group_len) lowest-scoring entries per group line."""
    if spec.is_nm:
        raise ConfigError("topk_mask requires an unstructured spec")
    lines = _group_lines(scores.scores.data, spec.group_axis)
    n_lines, line_len = lines.shape
    k_prune = int(np.floor(spec.s * line_len))
    keep_lines = np.ones((n_lines, line_len), dtype=bool)
    if k_prune > 0:
        order = np.argsort(lines, axis=1, kind="stable")
        np.put_along_axis(keep_lines, order[:, :k_prune], False, axis=1)
    keep = keep_lines if spec.group_axis is GroupAxis.PER_ROW else keep_lines.T
    return SparsityMask(keep=keep, spec=spec)


def nm_mask(scores: ImportanceMatrix, spec: SparsitySpec) -> SparsityMask:
    """Prune the n lowest-scoring entries in every aligned window of m."""
    if not spec.is_nm:
        raise ConfigError("nm_mask requires an N:M spec")
    lines = _group_lines(scores.scores.data, spec.group_axis)
    n_lines, line_len = lines.shape
    if line_len % spec.m != 0:
        raise ShapeError(
            f"group line length {line_len} not divisible by m={spec.m}; "
            f"choose a compatible m or pad the matrix explicitly"
        )
    windows = lines.reshape(n_lines, line_len // spec.m, spec.m)
    order = np.argsort(windows, axis=2, kind="stable")
    keep_w = np.ones_like(windows, dtype=bool)
    np.put_along_axis(keep_w, order[:, :, : spec.n], False, axis=2)
    keep_lines = keep_w.reshape(n_lines, line_len)
    keep = keep_lines if spec.group_axis is GroupAxis.PER_ROW else keep_lines.T
    return SparsityMask(keep=keep, spec=spec)


def make_mask(scores: ImportanceMatrix, spec: SparsitySpec) -> SparsityMask:
    """Dispatch to topk_mask or nm_mask based on the spec kind."""
    return nm_mask(scores, spec) if spec.is_nm else topk_mask(scores, spec)


def apply_mask(w: Tensor2D, mask: SparsityMask) -> Tensor2D:
    """Zero pruned entries; kept entries stay bit-identical (no update)."""
    if w.shape != mask.shape:
        raise DimensionError(f"weight shape {w.shape} != mask shape {mask.shape}")
    return Tensor2D(np.where(mask.keep, w.data, np.float32(0.0)))


def mask_sparsity(mask: SparsityMask) -> float:
    """Fraction of pruned entries."""
    return float(np.size(mask.keep) - np.count_nonzero(mask.keep)) / mask.keep.size


def validate_mask(mask: SparsityMask) -> None:
    """Independently check the mask against its declared pattern.

    Walks every group line (and window for N:M) and asserts exact keep
    counts; raises ConstraintError on any violation.
    """
    lines = _group_lines(mask.keep, mask.spec.group_axis)
    n_lines, line_len = lines.shape
    if mask.spec.is_nm:
        n, m = mask.spec.n, mask.spec.m
        if line_len % m != 0:
            raise ConstraintError(f"line length {line_len} not divisible by {m}")
        for i in range(n_lines):
            for w0 in range(0, line_len, m):
                kept = int(np.count_nonzero(lines[i, w0 : w0 + m]))
                if kept != m - n:
                    raise ConstraintError(
                        f"line {i} window {w0 // m}: kept {kept}, expected {m - n}"
                    )
    else:
        expected = line_len - int(np.floor(mask.spec.s * line_len))
        for i in range(n_lines):
            kept = int(np.count_nonzero(lines[i]))
            if kept != expected:
                raise ConstraintError(f"line {i}: kept {kept}, expected {expected}")
