"""Low-rank + column-sparse recovery from per-column sketches.

Library layout:

- model: factored value types, reconstruction, error metric
- measurements: Gaussian / partial-DFT / identity per-column operators
- iht: hard thresholding and the per-column sparse solver
- solver: initialization, per-column minimization, projected GD on the basis
- synth: seeded planted-problem generation
- experiments: Monte Carlo harness, presets, CSV + figure output
"""

from .iht import (AS_WRITTEN, NIHT, IhtParams, LinearOperatorHandle,
                  hard_threshold, iht)
from .measurements import (FOURIER, GAUSSIAN, IDENTITY, MeasurementEnsemble,
                           ProblemInstance, sample_ensemble)
from .model import (ColumnSparseMatrix, FactoredLowRank, GroundTruth,
                    InvariantReport, IterationRecord, RankDeficientError,
                    SolveTrace, coherence_stat, orthonormality_defect,
                    orthonormalize, reconstruct, rel_error)
from .solver import (MODE_LPS, MODE_LR_ONLY, SolverConfig, basis_gradient,
                     estimate_rank, init_sparse, ls_coefficients,
                     projected_gd_step, residual_problem, solve,
                     spectral_init, update_sparse)
from .synth import (DEFAULT_VALUE_SET, GenSpec, SparseValueModel,
                    gen_ground_truth, gen_instance)

__all__ = [
    "AS_WRITTEN", "NIHT", "IhtParams", "LinearOperatorHandle",
    "hard_threshold", "iht",
    "FOURIER", "GAUSSIAN", "IDENTITY", "MeasurementEnsemble",
    "ProblemInstance", "sample_ensemble",
    "ColumnSparseMatrix", "FactoredLowRank", "GroundTruth",
    "InvariantReport", "IterationRecord", "RankDeficientError", "SolveTrace",
    "coherence_stat", "orthonormality_defect", "orthonormalize",
    "reconstruct", "rel_error",
    "MODE_LPS", "MODE_LR_ONLY", "SolverConfig", "basis_gradient",
    "estimate_rank", "init_sparse", "ls_coefficients", "projected_gd_step",
    "residual_problem", "solve", "spectral_init", "update_sparse",
    "DEFAULT_VALUE_SET", "GenSpec", "SparseValueModel", "gen_ground_truth",
    "gen_instance",
]

__version__ = "0.1.0"
