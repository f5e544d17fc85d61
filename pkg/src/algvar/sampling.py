"""Deterministic low-discrepancy sample points.

A plain (unscrambled) Halton sequence, hand-rolled so structured reports are
byte-identical across library versions; the seed selects a disjoint window
of the sequence.
"""

from __future__ import annotations

import numpy as np

__all__ = ["halton", "sample_box", "sample_points"]

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61)


def _vdc(index: int, base: int) -> float:
    x, denom = 0.0, 1.0
    while index > 0:
        index, digit = divmod(index, base)
        denom *= base
        x += digit / denom
    return x


def halton(dim: int, count: int, start: int = 1) -> np.ndarray:
    """``count`` points of the ``dim``-dimensional Halton sequence in [0,1)^dim."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports at most {len(_PRIMES)} dimensions")
    if dim == 0:
        return np.zeros((count, 0))
    out = np.empty((count, dim))
    for k in range(count):
        for j in range(dim):
            out[k, j] = _vdc(start + k, _PRIMES[j])
    return out


def sample_box(dim: int, count: int, lo: float, hi: float, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the box [lo, hi]^dim, windowed by seed."""
    u = halton(dim, count, start=1 + seed * max(count, 1))
    return lo + (hi - lo) * u


def sample_points(
    m: int,
    n: int,
    count: int = 64,
    lo: float = -1.0,
    hi: float = 1.0,
    seed: int = 0,
    exclude_y_ball: float = 0.0,
) -> np.ndarray:
    """Points in the box of E-coordinates (x then y), shape (count, m+n).

    With ``exclude_y_ball > 0`` the sequence skips points whose fiber part has
    norm below the radius (multiplier nondegeneracy checks near y = 0 are
    artificial for many fixtures).
    """
    dim = m + n
    if dim == 0:
        return np.zeros((count, 0))
    out = np.empty((count, dim))
    taken = 0
    index = 1 + seed * max(count, 1)
    while taken < count:
        u = halton(dim, 1, start=index)[0]
        index += 1
        pt = lo + (hi - lo) * u
        if exclude_y_ball > 0.0 and n > 0:
            if float(np.linalg.norm(pt[m:])) < exclude_y_ball:
                continue
        out[taken] = pt
        taken += 1
    return out
