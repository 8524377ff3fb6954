"""Per-column measurement operators: Gaussian, row-subsampled DFT, identity.

Each of the q columns of the unknown matrix is observed through its own m x n
operator.  Gaussian operators have i.i.d. standard-normal entries; Fourier
operators are m rows of the unitary n-point DFT (entry (j, l) equal to
exp(-2i*pi*j*l/n) / sqrt(n)), so their rows are orthonormal.  The identity
kind (m == n) exists only as a test hook and is rejected by experiment
configs.

Construction is bit-reproducible from (kind, n, m, q, seed): every operator is
drawn from its own labelled substream, and Gaussian ensembles can either store
their matrices or regenerate them from the seed on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GroundTruth
from .seeding import ENSEMBLE_STREAM, substream

GAUSSIAN = "gaussian"
FOURIER = "fourier"
IDENTITY = "identity"

KINDS = (GAUSSIAN, FOURIER, IDENTITY)


def _unitary_dft(n: int) -> np.ndarray:
    grid = np.outer(np.arange(n), np.arange(n))
    return np.exp(-2j * np.pi * grid / n) / np.sqrt(n)


class MeasurementEnsemble:
    """The q per-column operators, with forward and adjoint application.

    Parameters
    ----------
    kind : "gaussian", "fourier" or "identity"
    n, m, q : signal length, measurements per column, number of columns
        (m < n except for the identity kind, where m == n)
    seed : int, drives all sampling
    store : if False (gaussian only), matrices are regenerated from the seed
        at every access instead of being kept in memory
    """

    def __init__(self, kind: str, n: int, m: int, q: int, seed: int,
                 store: bool = True):
        if kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {kind!r}")
        if n <= 0 or m <= 0 or q <= 0:
            raise ValueError("n, m and q must be positive")
        if kind == IDENTITY:
            if m != n:
                raise ValueError("identity ensemble requires m == n")
        elif m >= n:
            raise ValueError(f"need m < n, got m={m}, n={n}")
        self.kind = kind
        self.n = n
        self.m = m
        self.q = q
        self.seed = seed
        self.stored = store or kind != GAUSSIAN
        self._matrices = None
        self._dft = None
        self._rows = None
        if kind == GAUSSIAN and store:
            self._matrices = np.stack(
                [self._regenerate(k) for k in range(q)])
        elif kind == FOURIER:
            self._dft = _unitary_dft(n)
            self._rows = np.stack([
                np.sort(substream(seed, ENSEMBLE_STREAM, k)
                        .choice(n, size=m, replace=False))
                for k in range(q)])

    def _regenerate(self, k: int) -> np.ndarray:
        return substream(self.seed, ENSEMBLE_STREAM, k).standard_normal(
            (self.m, self.n))

    @property
    def is_complex(self) -> bool:
        return self.kind == FOURIER

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    def row_subset(self, k: int) -> np.ndarray:
        """Selected DFT rows of operator k (fourier only)."""
        if self.kind != FOURIER:
            raise ValueError("row subsets exist only for fourier ensembles")
        return np.asarray(self._rows[k])

    def operator(self, k: int) -> np.ndarray:
        """Dense m x n matrix of operator k."""
        self._check_index(k)
        if self.kind == GAUSSIAN:
            return self._matrices[k] if self._matrices is not None \
                else self._regenerate(k)
        if self.kind == FOURIER:
            return self._dft[self._rows[k]]
        return np.eye(self.n)

    def _check_index(self, k: int):
        if not 0 <= k < self.q:
            raise IndexError(f"operator index {k} out of range [0, {self.q})")

    def apply(self, k: int, x: np.ndarray) -> np.ndarray:
        """Forward application: operator k times a length-n vector."""
        self._check_index(k)
        if x.shape[0] != self.n:
            raise ValueError(f"expected length-{self.n} input, got {x.shape}")
        if self.kind == IDENTITY:
            return x.astype(np.result_type(x.dtype, np.float64), copy=True)
        return self.operator(k) @ x

    def apply_adjoint(self, k: int, y: np.ndarray) -> np.ndarray:
        """Adjoint application: conjugate-transposed operator k times y."""
        self._check_index(k)
        if y.shape[0] != self.m:
            raise ValueError(f"expected length-{self.m} input, got {y.shape}")
        if self.kind == IDENTITY:
            return y.astype(np.result_type(y.dtype, np.float64), copy=True)
        return self.operator(k).conj().T @ y

    def apply_sparse(self, k: int, indices: np.ndarray,
                     values: np.ndarray) -> np.ndarray:
        """Forward application to a sparse vector given as (indices, values)."""
        self._check_index(k)
        if self.kind == IDENTITY:
            out = np.zeros(self.n, dtype=np.result_type(values.dtype,
                                                        np.float64))
            out[indices] = values
            return out
        if len(indices) == 0:
            return np.zeros(self.m, dtype=self.dtype)
        if self.kind == GAUSSIAN and self._matrices is not None:
            return self._matrices[k][:, indices] @ values
        if self.kind == FOURIER:
            return self._dft[self._rows[k][:, None], indices] @ values
        return self.operator(k)[:, indices] @ values

    def basis_product(self, basis: np.ndarray) -> np.ndarray:
        """Stacked products (q, m, r): operator k times `basis`, for every k."""
        if basis.shape[0] != self.n:
            raise ValueError(f"expected {self.n}-row basis, got {basis.shape}")
        if self.kind == GAUSSIAN:
            if self._matrices is not None:
                return np.matmul(self._matrices, basis)
            return np.stack([self._regenerate(k) @ basis
                             for k in range(self.q)])
        if self.kind == FOURIER:
            return (self._dft @ basis)[self._rows]
        return np.broadcast_to(basis, (self.q,) + basis.shape)

    def measure(self, truth: GroundTruth) -> np.ndarray:
        """Exact measurements, one dense column of the truth at a time."""
        n = truth.basis.shape[0]
        q = truth.coeffs.shape[1]
        if n != self.n or q != self.q or truth.sparse.dim != self.n:
            raise ValueError("ground truth does not match ensemble dimensions")
        out = np.empty((self.m, q), dtype=np.result_type(
            self.dtype, truth.basis.dtype, truth.coeffs.dtype))
        for k in range(q):
            out[:, k] = self.apply(k, truth.column_dense(k))
        return out


def sample_ensemble(kind: str, n: int, m: int, q: int, seed: int,
                    store: bool = True) -> MeasurementEnsemble:
    """Draw a measurement ensemble; see MeasurementEnsemble for arguments."""
    return MeasurementEnsemble(kind, n, m, q, seed, store=store)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Measurements plus the operators that produced them."""

    measurements: np.ndarray
    ensemble: MeasurementEnsemble

    def __post_init__(self):
        expected = (self.ensemble.m, self.ensemble.q)
        if self.measurements.shape != expected:
            raise ValueError(
                f"measurements are {self.measurements.shape}, "
                f"ensemble implies {expected}")

    @property
    def dims(self) -> tuple:
        return (self.ensemble.n, self.ensemble.m, self.ensemble.q)

    @property
    def field(self) -> str:
        return "complex" if self.ensemble.is_complex else "real"
