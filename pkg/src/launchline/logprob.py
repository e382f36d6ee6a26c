"""Log-domain arithmetic for nonnegative weights.

A weight ``w >= 0`` is carried as ``log(w)``; zero is ``-inf``. Products of
tens of thousands of probabilities, and Boltzmann factors such as
``exp(-k * cost)`` with costs near 1e7, stay finite in this representation.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

NEG_INF = -math.inf


class AllZeroWeights(ValueError):
    """Raised by :func:`normalize_weights` when every weight is zero."""


def lw_mul(a: float, b: float) -> float:
    """Product of two log-weights. Zero absorbs."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


def lw_prod(values: Iterable[float]) -> float:
    v = list(values)
    if NEG_INF in v:
        return NEG_INF
    # compensated summation keeps long products accurate to a few ulps
    return math.fsum(v)


def lw_sum(values: Sequence[float] | np.ndarray) -> float:
    """``log(sum(exp(values)))`` computed with a max shift."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return NEG_INF
    top = float(np.max(v))
    if top == NEG_INF:
        return NEG_INF
    if top == math.inf:
        return math.inf
    return top + math.log(float(np.sum(np.exp(v - top))))


def lw_add(a: float, b: float) -> float:
    """Sum of two log-weights."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def normalize_weights(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Turn log-weights into probabilities summing to one.

    Raises :class:`AllZeroWeights` if no entry is finite-positive, which is
    the signal callers use for "keep the current distribution".
    """
    v = np.asarray(values, dtype=float)
    if np.isnan(v).any():
        raise ValueError("log-weights contain NaN")
    total = lw_sum(v)
    if total == NEG_INF:
        raise AllZeroWeights("all weights are zero")
    out = np.exp(v - total)
    # exp rounding leaves the sum within a few ulps of 1; fold the residue back
    return out / out.sum()


def to_log(p: float) -> float:
    return math.log(p) if p > 0 else NEG_INF


def from_log(v: float) -> float:
    return math.exp(v)
