"""Deterministic substream derivation for all random draws.

Every random quantity in the package is drawn from a generator derived from a
user-facing integer seed plus a fixed label, so that e.g. changing the number
of measurement rows never perturbs the ground-truth draw.  Labels are unique
across the package:

    0  low-rank basis (ground truth)
    1  low-rank coefficients (ground truth)
    2  sparse supports (ground truth)
    3  sparse values (ground truth)
    4  measurement ensemble (one sub-key per column)
    5  solver probe vectors (subspace iteration)
"""

import numpy as np

BASIS_STREAM = 0
COEFF_STREAM = 1
SUPPORT_STREAM = 2
VALUE_STREAM = 3
ENSEMBLE_STREAM = 4
PROBE_STREAM = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream of `seed` identified by `key`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
