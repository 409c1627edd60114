"""Bosonic Fock basis: enumeration, combinatorial (un)ranking, ladder operators.

The many-body basis for ``n`` bosons on ``m`` single-particle levels is the
set of occupation vectors (n_1, ..., n_m) with non-negative entries summing
to ``n``.  States are kept in ascending lexicographic order (level 0 most
significant), so the first state is (0, ..., 0, n) and the last is
(n, 0, ..., 0).  Ranking and unranking are exact integer combinatorics in
O(m) per state; no linear scans.

Level indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

__all__ = ["BasisTable", "enumerate_basis", "apply_two_body", "hilbert_dimension"]

_INDEX_MAX = np.iinfo(np.int64).max


def hilbert_dimension(n: int, m: int) -> int:
    """Number of ways to place n bosons on m levels: C(n+m-1, n)."""
    return comb(n + m - 1, n)


def _composition_table(n: int, m: int) -> np.ndarray:
    """Rank contributions for the lexicographic composition number system.

    ``table[s, r, v]`` counts the compositions with a value below ``v`` at
    level ``s`` when ``r`` particles remain to be placed on levels s..m-1.
    rank(state) = sum_s table[s, remaining_s, occ_s].
    """
    table = np.zeros((m, n + 1, n + 1), dtype=np.int64)
    for s in range(m):
        tail = m - s - 1  # levels after s
        for r in range(n + 1):
            acc = 0
            for v in range(n + 1):
                table[s, r, v] = acc
                if tail >= 1 and v <= r:
                    acc += comb(r - v + tail - 1, tail - 1)
    return table


@dataclass(frozen=True)
class BasisTable:
    """Immutable enumeration of the fixed-particle-number Fock basis.

    Attributes
    ----------
    n, m : particle count and level count.
    occupations : int64 array of shape (dimension, m), row i is state i.
    dimension : Hilbert-space size C(n+m-1, n).
    """

    n: int
    m: int
    occupations: np.ndarray
    dimension: int
    _rank_table: np.ndarray = field(repr=False)

    def state(self, i: int) -> np.ndarray:
        """Occupation vector of state i (a copy)."""
        return self.unrank(i)

    def rank(self, occupations: np.ndarray) -> int:
        """Lexicographic index of an occupation vector, in O(m) arithmetic."""
        occ = np.asarray(occupations, dtype=np.int64)
        if occ.shape != (self.m,):
            raise ValueError(f"occupation vector must have length {self.m}, got {occ.shape}")
        if (occ < 0).any() or occ.sum() != self.n:
            raise ValueError(
                f"not a valid {self.n}-particle state on {self.m} levels: {occ.tolist()}"
            )
        remaining = self.n - np.concatenate(([0], np.cumsum(occ[:-1])))
        return int(self._rank_table[np.arange(self.m), remaining, occ].sum())

    def rank_rows(self, occupations: np.ndarray) -> np.ndarray:
        """Vectorized rank for an (k, m) array of valid occupation vectors."""
        occ = np.asarray(occupations, dtype=np.int64)
        before = np.zeros_like(occ)
        np.cumsum(occ[:, :-1], axis=1, out=before[:, 1:])
        remaining = self.n - before
        return self._rank_table[np.arange(self.m)[None, :], remaining, occ].sum(axis=1)

    def unrank(self, i: int) -> np.ndarray:
        """Occupation vector of lexicographic index i; inverse of rank."""
        i = int(i)
        if not 0 <= i < self.dimension:
            raise ValueError(f"index {i} outside [0, {self.dimension})")
        occ = np.zeros(self.m, dtype=np.int64)
        remaining = self.n
        for s in range(self.m):
            row = self._rank_table[s, remaining]
            # largest v with row[v] <= i; row is non-decreasing in v
            v = int(np.searchsorted(row, i, side="right")) - 1
            v = min(v, remaining)
            occ[s] = v
            i -= int(row[v])
            remaining -= v
        return occ


def enumerate_basis(n: int, m: int) -> BasisTable:
    """Enumerate all n-boson states on m levels in lexicographic order.

    Raises ValueError when n or m is not positive, or when the dimension
    would overflow the int64 index type.
    """
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    dim = hilbert_dimension(n, m)
    if dim > _INDEX_MAX:
        raise ValueError(f"basis dimension {dim} overflows the int64 index type")
    occupations = np.zeros((dim, m), dtype=np.int64)
    occ = np.zeros(m, dtype=np.int64)

    row = 0

    def fill(s: int, remaining: int) -> None:
        nonlocal row
        if s == m - 1:
            occ[s] = remaining
            occupations[row] = occ
            row += 1
            return
        for v in range(remaining + 1):
            occ[s] = v
            fill(s + 1, remaining - v)
        occ[s] = 0

    fill(0, n)
    return BasisTable(
        n=n, m=m, occupations=occupations, dimension=dim, _rank_table=_composition_table(n, m)
    )


def apply_two_body(
    occupations: np.ndarray, s1: int, s2: int, s3: int, s4: int
) -> tuple[np.ndarray, float] | None:
    """Apply a_s1^+ a_s2^+ a_s3 a_s4 to a Fock state, right to left.

    Returns the image occupation vector and the product of ladder
    amplitudes (sqrt factors), or None when an annihilation hits an empty
    level.  Levels are 0-based; out-of-range indices raise ValueError.
    """
    occ = np.asarray(occupations, dtype=np.int64)
    m = occ.shape[0]
    for s in (s1, s2, s3, s4):
        if not 0 <= s < m:
            raise ValueError(f"level index {s} outside [0, {m})")
    out = occ.copy()
    product = 1  # exact integer product of the squared sqrt factors
    for s in (s4, s3):  # annihilate
        if out[s] == 0:
            return None
        product *= int(out[s])
        out[s] -= 1
    for s in (s2, s1):  # create
        product *= int(out[s]) + 1
        out[s] += 1
    return out, float(np.sqrt(product))
