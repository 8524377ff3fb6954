"""Alternating projected gradient descent and per-column minimization.

Recovers X = L + S from per-column sketches y_k = A_k x_k by keeping L in
factored form (orthonormal basis times coefficients) and S as sparse columns.
One solve runs:

1. sparse-first initialization: IHT per column against the raw operators;
2. spectral initialization: the basis is the top left singular block of the
   surrogate matrix whose column k is A_k^H (y_k - A_k s_k), computed
   matrix-free by block subspace iteration (rank either fixed or estimated
   by an energy threshold on the surrogate's singular values);
3. main loop: per column, project the measurements onto the orthogonal
   complement of range(A_k U) to decouple the sparse update (IHT, warm
   started), refit the coefficients by least squares through the same QR
   factor, then take one projected gradient step on the basis (QR
   retraction).  The step size is calibrated once from the first iteration's
   gradient norm and held fixed.

Per-column stages are embarrassingly parallel over columns; the gradient is
accumulated in ascending column order so traces are deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .iht import NIHT, STEP_RULES, IhtParams, LinearOperatorHandle, iht
from .measurements import MeasurementEnsemble, ProblemInstance
from .model import (ColumnSparseMatrix, FactoredLowRank, GroundTruth,
                    InvariantReport, IterationRecord, RankDeficientError,
                    SolveTrace, orthonormality_defect, orthonormalize,
                    rel_error)
from .seeding import PROBE_STREAM, substream

MODE_LPS = "lps"
MODE_LR_ONLY = "lr_only"
MODES = (MODE_LPS, MODE_LR_ONLY)

SPECTRAL = "spectral"
FROBENIUS = "frobenius"
GRAD_NORMS = (SPECTRAL, FROBENIUS)

SUBSPACE_TOL = 1e-8
SUBSPACE_MAX_ITERS = 50
OVERSAMPLE = 4


@dataclass(frozen=True)
class SolverConfig:
    """All solver tunables; defaults follow the reference experiment setup."""

    t_max: int = 200
    tau0_max: int = 10
    tau_max: int = 3
    eta_scale: float = 0.14
    rho_max: int = 0
    rank: Optional[int] = None          # None: estimate by energy threshold
    energy_threshold: float = 0.65
    mode: str = MODE_LPS
    step_rule: str = NIHT
    grad_norm: str = SPECTRAL
    early_exit_tol: Optional[float] = None
    seed: int = 0
    track_invariants: bool = False

    def validate(self):
        problems = []
        if self.t_max < 1:
            problems.append("t_max must be at least 1")
        if self.tau0_max < 1:
            problems.append("tau0_max must be at least 1")
        if self.tau_max < 1:
            problems.append("tau_max must be at least 1")
        if self.eta_scale <= 0:
            problems.append("eta_scale must be positive")
        if self.rho_max < 0:
            problems.append("rho_max must be nonnegative")
        if self.rank is not None and self.rank < 1:
            problems.append("rank must be at least 1 when fixed")
        if not 0 < self.energy_threshold < 1:
            problems.append("energy_threshold must lie in (0, 1)")
        if self.mode not in MODES:
            problems.append(f"unknown mode {self.mode!r}")
        if self.step_rule not in STEP_RULES:
            problems.append(f"unknown step rule {self.step_rule!r}")
        if self.grad_norm not in GRAD_NORMS:
            problems.append(f"unknown gradient norm {self.grad_norm!r}")
        if self.early_exit_tol is not None and self.early_exit_tol <= 0:
            problems.append("early_exit_tol must be positive when set")
        if problems:
            raise ValueError("; ".join(problems))


def estimate_rank(singular_values, energy_threshold: float, n: int, m: int,
                  q: int) -> int:
    """Smallest r capturing `energy_threshold` of the capped squared energy.

    The window is the first K = floor(min(n, q, m) / 10) singular values (at
    least one, at most the length of the list); returns the smallest r with
    sum of the first r squared values >= threshold times the window total.
    """
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.size == 0:
        raise ValueError("singular value list is empty")
    if np.any(sv < 0):
        raise ValueError("singular values must be nonnegative")
    if np.any(np.diff(sv) > 0):
        raise ValueError("singular values must be sorted descending")
    cap = max(1, min(n, m, q) // 10)
    cap = min(cap, sv.size)
    energy = np.cumsum(sv[:cap] ** 2)
    total = energy[-1]
    if total == 0:
        return 1
    return int(np.searchsorted(energy, energy_threshold * total) + 1)


def _sparse_column(dense: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(dense)
    return idx.astype(np.intp), dense[idx].copy()


def _raw_operator_handle(ens: MeasurementEnsemble,
                         k: int) -> LinearOperatorHandle:
    return LinearOperatorHandle(
        forward=lambda v: ens.apply(k, v),
        adjoint=lambda w: ens.apply_adjoint(k, w))


def init_sparse(Y: np.ndarray, ens: MeasurementEnsemble,
                config: SolverConfig) -> ColumnSparseMatrix:
    """Column-wise IHT against the raw operators, from zero.

    In lr_only mode the all-zero sparse matrix is returned untouched.
    """
    if Y.shape != (ens.m, ens.q):
        raise ValueError(f"measurements are {Y.shape}, "
                         f"expected {(ens.m, ens.q)}")
    if config.mode == MODE_LR_ONLY:
        return ColumnSparseMatrix.zeros(ens.n, ens.q)
    params = IhtParams(config.rho_max, config.tau0_max, config.step_rule)
    zero = np.zeros(ens.n, dtype=np.result_type(Y.dtype, ens.dtype))
    columns = []
    for k in range(ens.q):
        s = iht(Y[:, k], _raw_operator_handle(ens, k), params, zero)
        columns.append(_sparse_column(s))
    return ColumnSparseMatrix(ens.n, tuple(columns))


def _surrogate_column(ens, Y, sparse, k):
    idx, vals = sparse.columns[k]
    residual = Y[:, k] - ens.apply_sparse(k, idx, vals)
    return ens.apply_adjoint(k, residual)


def _surrogate_spectrum(Y, ens, sparse, num_probes, seed,
                        tol=SUBSPACE_TOL, max_iters=SUBSPACE_MAX_ITERS):
    """Leading left singular block and singular values of the init surrogate.

    The surrogate matrix (column k: A_k^H (y_k - A_k s_k)) is only touched
    through products evaluated column by column, keeping O((n + q) * probes)
    auxiliary storage.  Block subspace iteration runs until the spanned
    subspace moves less than `tol` or `max_iters` passes.
    """
    n, q = ens.n, ens.q
    dtype = np.result_type(Y.dtype, ens.dtype)
    probe = substream(seed, PROBE_STREAM).standard_normal((q, num_probes))
    block = np.zeros((n, num_probes), dtype=dtype)
    for k in range(q):
        block += np.outer(_surrogate_column(ens, Y, sparse, k), probe[k])
    basis = _orthonormal_or_raw(block)
    for _ in range(max_iters):
        block = np.zeros((n, num_probes), dtype=dtype)
        for k in range(q):
            col = _surrogate_column(ens, Y, sparse, k)
            block += np.outer(col, col.conj() @ basis)
        refreshed = _orthonormal_or_raw(block)
        drift = np.linalg.norm(
            refreshed - basis @ (basis.conj().T @ refreshed))
        basis = refreshed
        if drift <= tol:
            break
    cross = np.empty((q, num_probes), dtype=dtype)
    for k in range(q):
        cross[k] = _surrogate_column(ens, Y, sparse, k).conj() @ basis
    left_small, svals, _ = np.linalg.svd(cross.conj().T, full_matrices=False)
    return basis @ left_small, svals


def _orthonormal_or_raw(block):
    # subspace iteration tolerates rank-deficient probes; no hard failure
    return orthonormalize(block, require_full_rank=False)


def spectral_init(Y: np.ndarray, ens: MeasurementEnsemble,
                  sparse: ColumnSparseMatrix, rank: int,
                  seed: int = 0) -> np.ndarray:
    """Top-`rank` left singular vectors of the initialization surrogate."""
    if not 1 <= rank <= min(ens.n, ens.q, ens.m):
        raise ValueError(f"rank {rank} outside [1, min(n, q, m)]")
    if sparse.num_columns != ens.q:
        raise ValueError("sparse part has wrong number of columns")
    probes = min(rank + OVERSAMPLE, min(ens.n, ens.q))
    left, _ = _surrogate_spectrum(Y, ens, sparse, probes, seed)
    return left[:, :rank]


def _qr_with_check(stacked_products, iteration=None):
    """Batched QR of the per-column products, failing on rank deficiency."""
    factor, tri = np.linalg.qr(stacked_products)
    r = stacked_products.shape[2]
    if r:
        diags = np.abs(np.diagonal(tri, axis1=1, axis2=2))
        floor = np.finfo(diags.dtype).eps * max(
            stacked_products.shape[1], r) * diags.max(axis=1)
        bad = np.flatnonzero(diags.min(axis=1) <= floor)
        if bad.size:
            k = int(bad[0])
            raise RankDeficientError(
                f"projected operator for column {k} is rank deficient"
                + (f" at iteration {iteration}" if iteration else ""),
                column=k, iteration=iteration)
    return factor, tri


def residual_problem(U: np.ndarray, ens: MeasurementEnsemble, k: int,
                     y_k: np.ndarray):
    """Measurement residual and projected operator for one column.

    Returns (z, handle) where z is y_k with its range(A_k U) component
    removed and the handle applies (I - P) A_k and its adjoint, both built
    from the stored QR factor of A_k U, never materializing the projected
    operator densely.
    """
    products = ens.operator(k) @ U
    factor, _ = _qr_with_check(products[None])
    q_k = factor[0]

    def project_out(w):
        return w - q_k @ (q_k.conj().T @ w)

    handle = LinearOperatorHandle(
        forward=lambda v: project_out(ens.apply(k, v)),
        adjoint=lambda w: ens.apply_adjoint(k, project_out(w)))
    return project_out(y_k), handle


def update_sparse(U: np.ndarray, ens: MeasurementEnsemble, Y: np.ndarray,
                  previous: ColumnSparseMatrix,
                  config: SolverConfig) -> ColumnSparseMatrix:
    """Warm-started IHT per column on the projected residual problems."""
    if config.mode == MODE_LR_ONLY:
        return ColumnSparseMatrix.zeros(ens.n, ens.q)
    params = IhtParams(config.rho_max, config.tau_max, config.step_rule)
    dtype = np.result_type(Y.dtype, ens.dtype)
    columns = []
    for k in range(ens.q):
        z, handle = residual_problem(U, ens, k, Y[:, k])
        warm = previous.column_dense(k, dtype=dtype)
        columns.append(_sparse_column(iht(z, handle, params, warm)))
    return ColumnSparseMatrix(ens.n, tuple(columns))


def ls_coefficients(U: np.ndarray, ens: MeasurementEnsemble, Y: np.ndarray,
                    sparse: ColumnSparseMatrix) -> np.ndarray:
    """Per-column least-squares coefficients against the current basis.

    Column k minimizes ||(y_k - A_k s_k) - (A_k U) b|| via the QR factor of
    A_k U (never the normal equations); rank deficiency raises with the
    offending column index.
    """
    products = ens.basis_product(U)
    factor, tri = _qr_with_check(products)
    return _ls_from_factors(ens, Y, factor, tri, sparse)


def _ls_from_factors(ens, Y, factor, tri, sparse):
    r = factor.shape[2]
    coeffs = np.empty((r, ens.q), dtype=np.result_type(Y.dtype, ens.dtype))
    for k in range(ens.q):
        idx, vals = sparse.columns[k]
        rhs = Y[:, k] - ens.apply_sparse(k, idx, vals)
        coeffs[:, k] = np.linalg.solve(tri[k], factor[k].conj().T @ rhs) \
            if r else np.empty(0)
    return coeffs


def basis_gradient(U: np.ndarray, coeffs: np.ndarray,
                   sparse: ColumnSparseMatrix, Y: np.ndarray,
                   ens: MeasurementEnsemble) -> np.ndarray:
    """Sum over columns of A_k^H (A_k (U b_k + s_k) - y_k) b_k^H.

    Accumulated in ascending column order so the result is independent of
    any outer parallelism.
    """
    n, r = U.shape
    dtype = np.result_type(U.dtype, coeffs.dtype, Y.dtype, ens.dtype)
    grad = np.zeros((n, r), dtype=dtype)
    for k in range(ens.q):
        x = (U @ coeffs[:, k]).astype(dtype, copy=False)
        idx, vals = sparse.columns[k]
        if len(idx):
            x[idx] += vals
        residual = ens.apply(k, x) - Y[:, k]
        grad += np.outer(ens.apply_adjoint(k, residual),
                         coeffs[:, k].conj())
    return grad


def projected_gd_step(U: np.ndarray, grad: np.ndarray,
                      eta: float) -> np.ndarray:
    """Orthonormal factor of U - eta * grad (QR retraction, canonical signs)."""
    if eta <= 0:
        raise ValueError("step size must be positive")
    return orthonormalize(U - eta * grad)


def _gradient_norm(grad, which):
    if which == SPECTRAL:
        return float(np.linalg.norm(grad, 2)) if grad.size else 0.0
    return float(np.linalg.norm(grad))


def solve(instance: ProblemInstance, config: SolverConfig,
          ground_truth: Optional[GroundTruth] = None) -> SolveTrace:
    """Run the full alternating scheme and trace per-iteration diagnostics.

    Iteration 0 of the trace is the initialization; iterations 1..t_max each
    update the sparse part, the coefficients and the basis.  When a ground
    truth is supplied the relative reconstruction error is recorded per
    iteration.  Per-column rank failures abort with iteration and column
    context.
    """
    config.validate()
    ens = instance.ensemble
    Y = instance.measurements
    n, m, q = instance.dims
    start = time.perf_counter()

    def elapsed_ms():
        return (time.perf_counter() - start) * 1000.0

    reference = ground_truth.dense() if ground_truth is not None else None

    def estimate_error(U, coeffs, cols):
        if reference is None:
            return None
        estimate = (U @ coeffs).astype(
            np.result_type(U.dtype, coeffs.dtype, ens.dtype), copy=False)
        for k, (idx, vals) in enumerate(cols):
            if len(idx):
                estimate[idx, k] += vals
        return rel_error(reference, estimate)

    sparse0 = init_sparse(Y, ens, config)
    if config.rank is not None:
        rank = config.rank
        if not 1 <= rank <= min(n, q, m):
            raise ValueError(f"rank {rank} outside [1, min(n, q, m)]")
        U = spectral_init(Y, ens, sparse0, rank, seed=config.seed)
    else:
        cap = max(1, min(n, m, q) // 10)
        probes = min(cap + OVERSAMPLE, min(n, q))
        left, svals = _surrogate_spectrum(Y, ens, sparse0, probes,
                                          config.seed)
        rank = estimate_rank(svals, config.energy_threshold, n, m, q)
        U = left[:, :rank]

    iht_params = IhtParams(config.rho_max, config.tau_max, config.step_rule)
    dtype = np.result_type(Y.dtype, ens.dtype)
    lr_only = config.mode == MODE_LR_ONLY

    cols = list(sparse0.columns)
    products = ens.basis_product(U)
    factor, tri = _qr_with_check(products, iteration=0)
    coeffs = _ls_from_factors(ens, Y, factor, tri, sparse0)

    records = [IterationRecord(0, _objective(ens, Y, products, coeffs, cols),
                               estimate_error(U, coeffs, cols), elapsed_ms())]
    orth_defect = orthonormality_defect(U)
    ls_defect = 0.0
    max_nnz = max((len(i) for i, _ in cols), default=0)

    eta = None
    for t in range(1, config.t_max + 1):
        grad = np.zeros((n, rank), dtype=dtype)
        new_cols = []
        for k in range(q):
            operator_k = ens.operator(k)
            y_k = Y[:, k]
            q_k = factor[k]

            def project_out(w, q_k=q_k):
                return w - q_k @ (q_k.conj().T @ w)

            if lr_only:
                idx = np.empty(0, dtype=np.intp)
                vals = np.empty(0, dtype=dtype)
                sketch_sparse = np.zeros(m, dtype=dtype)
            else:
                handle = LinearOperatorHandle(
                    forward=lambda v, A=operator_k, p=project_out: p(A @ v),
                    adjoint=lambda w, A=operator_k, p=project_out:
                        A.conj().T @ p(w))
                warm = np.zeros(n, dtype=dtype)
                prev_idx, prev_vals = cols[k]
                warm[prev_idx] = prev_vals
                s_new = iht(project_out(y_k), handle, iht_params, warm)
                idx, vals = _sparse_column(s_new)
                sketch_sparse = operator_k[:, idx] @ vals if len(idx) \
                    else np.zeros(m, dtype=dtype)
            new_cols.append((idx, vals))
            rhs = y_k - sketch_sparse
            b_k = np.linalg.solve(tri[k], q_k.conj().T @ rhs) \
                if rank else np.empty(0, dtype=dtype)
            coeffs[:, k] = b_k
            if config.track_invariants:
                fit_residual = rhs - products[k] @ b_k
                defect = np.linalg.norm(products[k].conj().T @ fit_residual)
                scale = max(float(np.linalg.norm(y_k)), 1e-300)
                ls_defect = max(ls_defect, float(defect) / scale)
            residual = products[k] @ b_k + sketch_sparse - y_k
            grad += np.outer(operator_k.conj().T @ residual, b_k.conj())
        cols = new_cols
        max_nnz = max(max_nnz, max((len(i) for i, _ in cols), default=0))

        if eta is None:
            scale = _gradient_norm(grad, config.grad_norm)
            if scale == 0:
                # initialization already stationary: nothing left to step on
                records.append(IterationRecord(
                    t, _objective(ens, Y, products, coeffs, cols),
                    estimate_error(U, coeffs, cols), elapsed_ms()))
                return _finish(records, U, coeffs, cols, n, rank, None,
                               config, orth_defect, ls_defect, max_nnz)
            eta = config.eta_scale / scale

        try:
            U = projected_gd_step(U, grad, eta)
        except RankDeficientError as err:
            raise RankDeficientError(
                f"basis update diverged at iteration {t}: {err}",
                iteration=t) from err
        orth_defect = max(orth_defect, orthonormality_defect(U))

        products = ens.basis_product(U)
        objective = _objective(ens, Y, products, coeffs, cols)
        records.append(IterationRecord(
            t, objective, estimate_error(U, coeffs, cols), elapsed_ms()))

        if config.early_exit_tol is not None and len(records) >= 2:
            prev = records[-2].objective
            if prev == 0 or abs(objective - prev) / prev < \
                    config.early_exit_tol:
                break
        if t < config.t_max:
            try:
                factor, tri = _qr_with_check(products, iteration=t + 1)
            except RankDeficientError as err:
                raise RankDeficientError(
                    f"column {err.column} lost rank at iteration {t + 1}",
                    column=err.column, iteration=t + 1) from err

    return _finish(records, U, coeffs, cols, n, rank, eta, config,
                   orth_defect, ls_defect, max_nnz)


def _objective(ens, Y, products, coeffs, cols):
    total = 0.0
    for k in range(ens.q):
        idx, vals = cols[k]
        sketch = products[k] @ coeffs[:, k] if coeffs.shape[0] \
            else np.zeros(ens.m, dtype=Y.dtype)
        if len(idx):
            sketch = sketch + ens.apply_sparse(k, idx, vals)
        residual = sketch - Y[:, k]
        total += float(np.vdot(residual, residual).real)
    return total


def _finish(records, U, coeffs, cols, n, rank, eta, config, orth_defect,
            ls_defect, max_nnz):
    report = None
    if config.track_invariants:
        report = InvariantReport(max_orthonormality_defect=orth_defect,
                                 max_ls_defect=ls_defect,
                                 max_column_nnz=max_nnz)
    return SolveTrace(
        records=tuple(records),
        factors=FactoredLowRank(U, coeffs),
        sparse=ColumnSparseMatrix(n, tuple(cols)),
        rank=rank,
        step_size=eta,
        invariants=report)
