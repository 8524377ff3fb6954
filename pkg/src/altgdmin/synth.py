"""Seeded generation of planted low-rank + column-sparse problems.

The low-rank basis comes from orthonormalizing an i.i.d. Gaussian matrix, the
coefficients are i.i.d. Gaussian, and each sparse column places exactly
`sparsity` values on a uniformly random support.  Values follow one of two
models: uniform on [-alpha, alpha], or uniform over a fixed finite set such
as {-1, -10, -100, 1, 10, 100}.

All draws come from labelled substreams of the spec seed (see `seeding`), so
the ground truth is independent of the measurement count and ensemble seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .measurements import IDENTITY, MeasurementEnsemble, ProblemInstance
from .model import ColumnSparseMatrix, GroundTruth, orthonormalize
from .seeding import (BASIS_STREAM, COEFF_STREAM, SUPPORT_STREAM,
                      VALUE_STREAM, substream)

UNIFORM_INTERVAL = "s1"
FIXED_SET = "s2"

DEFAULT_VALUE_SET = (-1.0, -10.0, -100.0, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class SparseValueModel:
    """How nonzero sparse entries are drawn.

    kind "s1": i.i.d. uniform on [-alpha, alpha] (exact zeros are redrawn so
    stored entries are never zero).  kind "s2": i.i.d. uniform over
    `value_set`.
    """

    kind: str = UNIFORM_INTERVAL
    alpha: float = 6.0
    value_set: Tuple[float, ...] = DEFAULT_VALUE_SET

    def __post_init__(self):
        if self.kind not in (UNIFORM_INTERVAL, FIXED_SET):
            raise ValueError(f"unknown sparse value model {self.kind!r}")
        if self.kind == UNIFORM_INTERVAL and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == FIXED_SET:
            if len(self.value_set) == 0:
                raise ValueError("value set must be nonempty")
            if any(v == 0 for v in self.value_set):
                raise ValueError("value set must not contain zero")

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == UNIFORM_INTERVAL:
            vals = rng.uniform(-self.alpha, self.alpha, size=count)
            while np.any(vals == 0):
                redraw = vals == 0
                vals[redraw] = rng.uniform(-self.alpha, self.alpha,
                                           size=int(redraw.sum()))
            return vals
        choices = np.asarray(self.value_set, dtype=np.float64)
        return choices[rng.integers(len(choices), size=count)]


@dataclass(frozen=True)
class GenSpec:
    """Dimensions, rank, per-column sparsity, value model and seed."""

    n: int
    q: int
    rank: int
    sparsity: int
    value_model: SparseValueModel = field(default_factory=SparseValueModel)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.rank <= min(self.n, self.q):
            raise ValueError(f"need 0 < rank <= min(n, q), got {self.rank}")
        if not 0 <= self.sparsity <= self.n:
            raise ValueError(
                f"need 0 <= sparsity <= n, got {self.sparsity}")


def gen_ground_truth(spec: GenSpec) -> GroundTruth:
    """Draw the planted factors and sparse part for `spec`."""
    basis = orthonormalize(substream(spec.seed, BASIS_STREAM)
                           .standard_normal((spec.n, spec.rank)))
    coeffs = substream(spec.seed, COEFF_STREAM).standard_normal(
        (spec.rank, spec.q))
    support_rng = substream(spec.seed, SUPPORT_STREAM)
    value_rng = substream(spec.seed, VALUE_STREAM)
    columns = []
    for _ in range(spec.q):
        if spec.sparsity == 0:
            columns.append((np.empty(0, dtype=np.intp), np.empty(0)))
            continue
        idx = np.sort(support_rng.choice(spec.n, size=spec.sparsity,
                                         replace=False))
        vals = spec.value_model.draw(value_rng, spec.sparsity)
        columns.append((idx.astype(np.intp), vals))
    sparse = ColumnSparseMatrix(spec.n, tuple(columns))
    return GroundTruth(basis, coeffs, sparse)


def gen_instance(spec: GenSpec, ensemble_kind: str, m: int,
                 ens_seed: int) -> Tuple[ProblemInstance, GroundTruth]:
    """Draw ground truth and ensemble, measure, and package both.

    Measurements are exact (noiseless).  The ground truth depends only on
    `spec`, never on `m` or `ens_seed`.
    """
    if ensemble_kind != IDENTITY and m >= spec.n:
        raise ValueError(f"need m < n, got m={m}, n={spec.n}")
    truth = gen_ground_truth(spec)
    ensemble = MeasurementEnsemble(ensemble_kind, spec.n, m, spec.q, ens_seed)
    measurements = ensemble.measure(truth)
    return ProblemInstance(measurements, ensemble), truth
