"""Core value types for the factored low-rank + column-sparse model.

A matrix X (n x q) is represented as L + S where L = basis @ coeffs is a
rank-r factorization with an orthonormal basis, and S stores at most a few
nonzero entries per column as sorted (index, value) pairs.  Dense n x q
matrices appear only at API boundaries (final reconstruction and error
computation); everything else works on the factored pieces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ORTHONORMALITY_TOL = 1e-10


class RankDeficientError(ValueError):
    """A per-column least-squares subproblem lost full column rank."""

    def __init__(self, message: str, column: Optional[int] = None,
                 iteration: Optional[int] = None):
        super().__init__(message)
        self.column = column
        self.iteration = iteration


def orthonormality_defect(basis: np.ndarray) -> float:
    """|| basis^H basis - I ||_F, zero for exactly orthonormal columns."""
    r = basis.shape[1]
    gram = basis.conj().T @ basis
    return float(np.linalg.norm(gram - np.eye(r)))


@dataclass(frozen=True, eq=False)
class FactoredLowRank:
    """Rank-r matrix L = basis @ coeffs, never materialized unless asked.

    basis : (n, r) with orthonormal columns (checked on construction)
    coeffs : (r, q)
    """

    basis: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if self.basis.ndim != 2 or self.coeffs.ndim != 2:
            raise ValueError("basis and coeffs must be 2-d arrays")
        if self.basis.shape[1] != self.coeffs.shape[0]:
            raise ValueError(
                f"inner dimensions disagree: basis is {self.basis.shape}, "
                f"coeffs is {self.coeffs.shape}")
        defect = orthonormality_defect(self.basis)
        if defect > ORTHONORMALITY_TOL:
            raise ValueError(
                f"basis columns are not orthonormal (defect {defect:.3e})")

    @property
    def shape(self) -> tuple:
        return (self.basis.shape[0], self.coeffs.shape[1])

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def dense(self) -> np.ndarray:
        return self.basis @ self.coeffs


@dataclass(frozen=True, eq=False)
class ColumnSparseMatrix:
    """q sparse columns of length `dim`, each a sorted run of (index, value).

    Invariants checked on construction: indices strictly increasing within
    each column, inside [0, dim), and no stored value is exactly zero.
    """

    dim: int
    columns: tuple

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("column length must be positive")
        for k, (idx, vals) in enumerate(self.columns):
            if len(idx) != len(vals):
                raise ValueError(f"column {k}: index/value length mismatch")
            if len(idx) == 0:
                continue
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"column {k}: index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError(f"column {k}: indices not strictly increasing")
            if np.any(vals == 0):
                raise ValueError(f"column {k}: stored value is exactly zero")

    @classmethod
    def zeros(cls, dim: int, num_columns: int) -> "ColumnSparseMatrix":
        empty = (np.empty(0, dtype=np.intp), np.empty(0))
        return cls(dim, tuple(empty for _ in range(num_columns)))

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "ColumnSparseMatrix":
        dim, q = dense.shape
        cols = []
        for k in range(q):
            idx = np.flatnonzero(dense[:, k])
            cols.append((idx, dense[idx, k].copy()))
        return cls(dim, tuple(cols))

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    def max_nnz(self) -> int:
        return max((len(idx) for idx, _ in self.columns), default=0)

    def column_dense(self, k: int, dtype=None) -> np.ndarray:
        idx, vals = self.columns[k]
        out = np.zeros(self.dim, dtype=dtype if dtype is not None else
                       (vals.dtype if len(vals) else np.float64))
        out[idx] = vals
        return out

    def to_dense(self) -> np.ndarray:
        dtype = np.result_type(np.float64,
                               *(v.dtype for _, v in self.columns if len(v)))
        out = np.zeros((self.dim, self.num_columns), dtype=dtype)
        for k, (idx, vals) in enumerate(self.columns):
            out[idx, k] = vals
        return out


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The planted decomposition X = basis @ coeffs + sparse."""

    basis: np.ndarray
    coeffs: np.ndarray
    sparse: ColumnSparseMatrix

    def low_rank(self) -> FactoredLowRank:
        return FactoredLowRank(self.basis, self.coeffs)

    def dense(self) -> np.ndarray:
        return reconstruct(self.low_rank(), self.sparse)

    def column_dense(self, k: int) -> np.ndarray:
        x = self.basis @ self.coeffs[:, k]
        idx, vals = self.sparse.columns[k]
        if len(idx):
            x = x.astype(np.result_type(x.dtype, vals.dtype), copy=False)
            x[idx] += vals
        return x


@dataclass(frozen=True)
class IterationRecord:
    """One solver iteration: index 0 is the initialization."""

    iteration: int
    objective: float
    rel_error: Optional[float]
    elapsed_ms: float


@dataclass(frozen=True)
class InvariantReport:
    """Worst per-iteration invariant defects seen during a solve."""

    max_orthonormality_defect: float
    max_ls_defect: float
    max_column_nnz: int


@dataclass(frozen=True, eq=False)
class SolveTrace:
    """Per-iteration diagnostics plus the final factored estimate."""

    records: tuple
    factors: FactoredLowRank
    sparse: ColumnSparseMatrix
    rank: int
    step_size: Optional[float]
    invariants: Optional[InvariantReport] = None

    def __post_init__(self):
        for expected, rec in enumerate(self.records):
            if rec.iteration != expected:
                raise ValueError("iteration indices must be contiguous from 0")

    @property
    def final_rel_error(self) -> Optional[float]:
        return self.records[-1].rel_error

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def estimate(self) -> np.ndarray:
        return reconstruct(self.factors, self.sparse)


def reconstruct(low_rank: FactoredLowRank,
                sparse: ColumnSparseMatrix) -> np.ndarray:
    """Dense n x q matrix whose column k is basis @ coeffs[:, k] + sparse_k."""
    n, q = low_rank.shape
    if sparse.dim != n or sparse.num_columns != q:
        raise ValueError(
            f"sparse part is {sparse.dim} x {sparse.num_columns}, "
            f"low-rank part is {n} x {q}")
    value_dtypes = [v.dtype for _, v in sparse.columns if len(v)]
    dtype = np.result_type(low_rank.basis.dtype, low_rank.coeffs.dtype,
                           *value_dtypes)
    out = (low_rank.basis @ low_rank.coeffs).astype(dtype, copy=False)
    for k, (idx, vals) in enumerate(sparse.columns):
        if len(idx):
            out[idx, k] += vals
    return out


def orthonormalize(matrix: np.ndarray,
                   require_full_rank: bool = True) -> np.ndarray:
    """Orthonormal factor of the thin QR of `matrix`, sign-canonicalized.

    The triangular factor's diagonal is made real nonnegative, which pins the
    otherwise arbitrary per-column sign (phase, in the complex case): the
    result is a deterministic function of the input, and feeding an already
    orthonormal matrix reproduces it.  With `require_full_rank`, a vanishing
    diagonal entry raises RankDeficientError; without it, the (still
    orthonormal) factor is returned as-is.
    """
    factor, tri = np.linalg.qr(matrix)
    diag = np.diagonal(tri)
    scale = np.abs(diag)
    if require_full_rank and matrix.shape[1] and np.min(scale) <= \
            matrix.shape[0] * np.finfo(factor.dtype).eps * \
            max(np.max(scale), 1e-300):
        raise RankDeficientError("matrix to orthonormalize is rank deficient")
    phases = np.where(scale > 0, diag / np.where(scale > 0, scale, 1.0), 1.0)
    return factor * phases


def rel_error(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Frobenius-norm relative error ||reference - estimate||_F / ||reference||_F."""
    if reference.shape != estimate.shape:
        raise ValueError(
            f"shape mismatch: {reference.shape} vs {estimate.shape}")
    denom = np.linalg.norm(reference)
    if denom == 0:
        raise ValueError("relative error undefined for a zero reference")
    return float(np.linalg.norm(reference - estimate) / denom)


def coherence_stat(coeffs: np.ndarray) -> float:
    """Empirical incoherence of a coefficient matrix.

    Returns max_k ||coeffs[:, k]|| * sqrt(q / r) / sigma_max(coeffs); equals 1
    when all columns carry the same energy and grows as energy concentrates in
    few columns.
    """
    if coeffs.ndim != 2:
        raise ValueError("coeffs must be a 2-d array")
    sigma_max = np.linalg.norm(coeffs, 2)
    if sigma_max == 0:
        raise ValueError("coherence undefined for a zero matrix")
    r, q = coeffs.shape
    max_col = np.max(np.linalg.norm(coeffs, axis=0))
    return float(max_col * np.sqrt(q / r) / sigma_max)
