"""Tracking Floquet multipliers along a family of solutions.

Adjacent spectra are matched by a linear assignment whose cost favors
continuity of the phase (linearly extrapolated), the modulus, the mean wave
number and the parity::

    C[i, j] = 10 |wrap(sigma_i + m_i dA - sigma_j)|^(1/2) + ||lam_i| - |lam_j||^(1/2)
              + |<k>_i - <k>_j|^(1/2) + 100 |p_i - p_j|

Square roots reward matching most eigenvalues closely while letting a few
change a lot.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

SLOPE_LIMIT = 5.0
UNIT_TOL = 1e-6


@dataclass
class SpectrumColumn:
    """Spectrum of one family member: modulus, phase, mean wave number and
    parity of its ``n*`` leading multipliers."""

    modulus: np.ndarray
    sigma: np.ndarray
    kmean: np.ndarray
    parity: np.ndarray
    parameter: float

    def __post_init__(self):
        self.modulus = np.asarray(self.modulus, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.kmean = np.asarray(self.kmean, dtype=float)
        self.parity = np.asarray(self.parity, dtype=int)
        n = self.modulus.size
        if not (self.sigma.size == self.kmean.size == self.parity.size == n):
            raise ValueError("spectrum column arrays must have equal length")
        if not np.all(np.isin(self.parity, (0, 1))):
            raise ValueError("parity entries must be 0 or 1")

    def __len__(self):
        return self.modulus.size

    @classmethod
    def from_records(cls, records, parameter: float) -> "SpectrumColumn":
        return cls(
            [r.modulus for r in records],
            [r.sigma for r in records],
            [r.kmean for r in records],
            [r.parity for r in records],
            parameter,
        )

    def permuted(self, perm: np.ndarray) -> "SpectrumColumn":
        """Column whose entry ``i`` is entry ``perm[i]`` of this one (0-based)."""
        return SpectrumColumn(
            self.modulus[perm], self.sigma[perm], self.kmean[perm], self.parity[perm], self.parameter
        )


def wrap(angle):
    """Representative of ``angle`` modulo ``2 pi`` in ``(-pi, pi]``."""
    a = np.mod(np.asarray(angle, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(a == -np.pi, np.pi, a)


def clamp(x, limit: float = SLOPE_LIMIT):
    return np.clip(x, -limit, limit)


def extrapolation_slopes(prev: SpectrumColumn | None, cur: SpectrumColumn) -> np.ndarray:
    """Clamped phase slopes ``d sigma / d parameter`` per row (zero if no
    previous column)."""
    if prev is None:
        return np.zeros(len(cur))
    dA = cur.parameter - prev.parameter
    if dA == 0:
        return np.zeros(len(cur))
    return clamp(wrap(cur.sigma - prev.sigma) / dA)


def cost_matrix(
    cur: SpectrumColumn, nxt: SpectrumColumn, prev: SpectrumColumn | None = None
) -> np.ndarray:
    """Assignment cost from the rows of ``cur`` to the rows of ``nxt``.

    The slope of row ``i`` is zeroed when ``prev`` is absent or when any of
    ``|lam_i|`` (current or previous) or ``|lam_j|`` (next) is farther than
    ``1e-6`` from the unit circle.
    """
    if len(cur) != len(nxt) or (prev is not None and len(prev) != len(cur)):
        raise ValueError(
            f"spectrum columns differ in length: {len(cur)}, {len(nxt)}"
            + ("" if prev is None else f", {len(prev)}")
        )
    slope = extrapolation_slopes(prev, cur)
    on_circle_i = np.abs(cur.modulus - 1) <= UNIT_TOL
    if prev is not None:
        on_circle_i &= np.abs(prev.modulus - 1) <= UNIT_TOL
    on_circle_j = np.abs(nxt.modulus - 1) <= UNIT_TOL
    m = np.where(on_circle_i[:, None] & on_circle_j[None, :], slope[:, None], 0.0)
    dA = nxt.parameter - cur.parameter
    dphase = wrap(cur.sigma[:, None] + m * dA - nxt.sigma[None, :])
    return (
        10.0 * np.sqrt(np.abs(dphase))
        + np.sqrt(np.abs(cur.modulus[:, None] - nxt.modulus[None, :]))
        + np.sqrt(np.abs(cur.kmean[:, None] - nxt.kmean[None, :]))
        + 100.0 * np.abs(cur.parity[:, None] - nxt.parity[None, :])
    )


def assign(C: np.ndarray):
    """Optimal assignment ``P`` minimizing ``sum_i C[i, P[i]]`` (0-based)."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"cost matrix must be square, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(C.shape[0], dtype=int)
    perm[rows] = cols
    return perm, float(C[rows, cols].sum())


@lru_cache(maxsize=None)
def _all_permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def brute_force_assign(C: np.ndarray):
    """Exhaustive minimum over all ``n!`` permutations (small ``n`` only).

    Costs are summed row by row in index order, the same order as
    :func:`assignment_cost`.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n > 10:
        raise ValueError(f"brute force over {n}! permutations is not feasible")
    perms = _all_permutations(n)
    tot = np.zeros(perms.shape[0])
    for i in range(n):
        tot += C[i, perms[:, i]]
    j = int(np.argmin(tot))
    return perms[j].copy(), float(tot[j])


def assignment_cost(C: np.ndarray, perm) -> float:
    tot = 0.0
    for i, j in enumerate(perm):
        tot += C[i, j]
    return float(tot)


def _check_table(perm: np.ndarray):
    n = perm.shape[0]
    for s in range(perm.shape[1]):
        if not np.array_equal(np.sort(perm[:, s]), np.arange(1, n + 1)):
            raise ValueError(f"column {s + 1} of the permutation table is not a permutation")


def track_family(columns: list[SpectrumColumn]):
    """Match each column to the previous one.

    Returns ``(perm, reordered)``: ``perm`` is an ``n* x l`` table of 1-based
    source indices (entry ``(i, s)`` of the original data moves to row ``i``)
    and ``reordered`` the permuted columns.
    """
    if len(columns) < 2:
        raise ValueError("need at least two spectra to track a family")
    n = len(columns[0])
    perm = np.zeros((n, len(columns)), dtype=int)
    perm[:, 0] = np.arange(1, n + 1)
    out = [columns[0]]
    for s in range(1, len(columns)):
        prev = out[s - 2] if s >= 2 else None
        C = cost_matrix(out[s - 1], columns[s], prev)
        P, _ = assign(C)
        perm[:, s] = P + 1
        out.append(columns[s].permuted(P))
    _check_table(perm)
    return perm, out


def apply_swaps(perm: np.ndarray, swaps) -> np.ndarray:
    """Swap rows ``i1, i2`` in columns ``s..l`` for each 1-based triple."""
    perm = np.array(perm, dtype=int, copy=True)
    n, ell = perm.shape
    for triple in swaps:
        s, i1, i2 = (int(v) for v in triple)
        if not (1 <= s <= ell and 1 <= i1 <= n and 1 <= i2 <= n):
            raise ValueError(f"swap {tuple(triple)} out of range for a {n}x{ell} table")
        perm[[i1 - 1, i2 - 1], s - 1 :] = perm[[i2 - 1, i1 - 1], s - 1 :]
    _check_table(perm)
    return perm


def reorder(columns: list[SpectrumColumn], perm: np.ndarray) -> list[SpectrumColumn]:
    """Apply a permutation table to the original (unpermuted) columns."""
    return [col.permuted(perm[:, s] - 1) for s, col in enumerate(columns)]


def read_swaps(path) -> list[tuple[int, int, int]]:
    """Swap file: three whitespace-separated integers ``s i1 i2`` per line."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 integers, got {line!r}")
            out.append(tuple(int(p) for p in parts))
    return out
