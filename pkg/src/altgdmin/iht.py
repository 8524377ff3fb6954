"""Iterative hard thresholding for per-column sparse recovery.

Minimizes ||forward(s) - z||^2 over vectors with at most `sparsity` nonzeros
by normalized gradient steps followed by hard thresholding, warm-startable
from a previous iterate.  The operator is abstract (forward/adjoint closures),
so the same routine serves both the raw measurement operators at
initialization and the projected residual operators inside the main solver
loop.

Two step-size rules are provided:

``niht`` (default)
    The normalized step of Blumensath & Davies: the squared norm ratio
    ||g_T||^2 / ||forward(g_T)||^2 with g_T the gradient restricted to the
    support of the current iterate.  When the iterate is zero (no support
    yet) the unrestricted ratio ||g||^2 / ||forward(g)||^2 is used.

``as_written``
    The plain norm ratio ||g|| / ||forward(g)|| on the full gradient.  Kept
    for comparison; on operators whose restricted squared norm is far from 1
    (e.g. unnormalized Gaussian matrices) this rule overshoots and diverges,
    so it is not the default.

The gradient convention is g = adjoint(forward(s) - z), without the factor 2
from differentiating the squared norm; both rules are invariant to that
constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

AS_WRITTEN = "as_written"
NIHT = "niht"

STEP_RULES = (NIHT, AS_WRITTEN)


@dataclass(frozen=True)
class LinearOperatorHandle:
    """A forward/adjoint closure pair over some m x n linear operator."""

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IhtParams:
    """Sparsity target, iteration count and step rule for one IHT call."""

    sparsity: int
    max_iters: int
    step_rule: str = NIHT

    def __post_init__(self):
        if self.sparsity < 0:
            raise ValueError("sparsity must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")


def hard_threshold(s: np.ndarray, sparsity: int) -> np.ndarray:
    """Keep the `sparsity` largest-magnitude entries of s, zero the rest.

    Ties go to the lower index.  sparsity = 0 gives the zero vector and
    sparsity >= len(s) returns a copy of s.
    """
    if sparsity <= 0:
        return np.zeros_like(s)
    if sparsity >= s.size:
        return s.copy()
    # lexsort: primary key descending magnitude, secondary key ascending index
    order = np.lexsort((np.arange(s.size), -np.abs(s)))
    out = np.zeros_like(s)
    keep = order[:sparsity]
    out[keep] = s[keep]
    return out


def _squared_norm(v: np.ndarray) -> float:
    return float(np.vdot(v, v).real)


def _step_size(g, op, s, rule, sparsity):
    """Step length for the current gradient, or None to keep the iterate."""
    if rule == AS_WRITTEN:
        num = np.sqrt(_squared_norm(g))
        if num == 0:
            return None
        den = np.sqrt(_squared_norm(op.forward(g)))
        if den == 0:
            return None
        return num / den
    support = np.flatnonzero(s)
    if support.size:
        restricted = np.zeros_like(g)
        restricted[support] = g[support]
        num = _squared_norm(restricted)
        if num > 0:
            den = _squared_norm(op.forward(restricted))
            if den > 0:
                return num / den
    # no support yet, or gradient vanishes on it: unrestricted ratio
    num = _squared_norm(g)
    if num == 0:
        return None
    den = _squared_norm(op.forward(g))
    if den == 0:
        return None
    return num / den


def iht(z: np.ndarray, op: LinearOperatorHandle, params: IhtParams,
        s_init: np.ndarray) -> np.ndarray:
    """Run exactly params.max_iters IHT iterations from s_init.

    Each iteration computes g = adjoint(forward(s) - z), a step size per the
    rule, and hard-thresholds s - mu * g to the sparsity target.  Degenerate
    step sizes (zero gradient or zero forward image) return the current
    iterate unchanged.
    """
    s = s_init.copy()
    for _ in range(params.max_iters):
        g = op.adjoint(op.forward(s) - z)
        mu = _step_size(g, op, s, params.step_rule, params.sparsity)
        if mu is None:
            return s
        s = hard_threshold(s - mu * g, params.sparsity)
    return s
