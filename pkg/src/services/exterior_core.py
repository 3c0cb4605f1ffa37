"""Combinatorics of alternating multi-indices in R^N.

Multi-indices are 1-based (axes 1..N) and ordered lexicographically; that
order is the component layout of every form field in the package. The
incidence table is the signed sparsity pattern of the exterior derivative.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

from src.utils.error_handler import DegreeError


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Strictly increasing tuple of axes in {1, ..., N}."""

    entries: tuple[int, ...]
    ambient: int

    def __post_init__(self) -> None:
        if self.ambient < 1:
            raise DegreeError(f"Ambient dimension must be >= 1, got {self.ambient}")
        if any(b <= a for a, b in zip(self.entries, self.entries[1:])):
            raise DegreeError(f"Multi-index entries must increase strictly: {self.entries}")
        if self.entries and not (1 <= self.entries[0] and self.entries[-1] <= self.ambient):
            raise DegreeError(
                f"Multi-index {self.entries} outside axes 1..{self.ambient}",
            )

    @property
    def degree(self) -> int:
        return len(self.entries)

    @property
    def axes(self) -> tuple[int, ...]:
        """0-based axes for array storage."""
        return tuple(e - 1 for e in self.entries)

    def insert(self, direction: int) -> tuple["MultiIndex", int]:
        """Insert ``direction`` in sorted position; return the index and (-1)^position."""
        if direction in self.entries:
            raise DegreeError(f"Axis {direction} already in {self.entries}")
        position = sum(1 for e in self.entries if e < direction)
        target = self.entries[:position] + (direction,) + self.entries[position:]
        sign = -1 if position % 2 else 1
        return MultiIndex(target, self.ambient), sign

    def __str__(self) -> str:
        return "(" + ",".join(str(e) for e in self.entries) + ")"


@dataclass(frozen=True)
class IncidenceEntry:
    """One signed term of the exterior derivative: (dE)_target += sign * D_direction E_source."""

    source_index: MultiIndex
    target_index: MultiIndex
    direction: int
    sign: int

    @property
    def source_rank(self) -> int:
        return rank_of(self.source_index)

    @property
    def target_rank(self) -> int:
        return rank_of(self.target_index)


def _check_degree(n: int, q: int) -> None:
    if n < 1:
        raise DegreeError(f"Ambient dimension must be >= 1, got {n}")
    if not 0 <= q <= n:
        raise DegreeError(
            f"Degree {q} outside [0, {n}]",
            details={"N": n, "q": q},
        )


@lru_cache(maxsize=None)
def enumerate_multi_indices(n: int, q: int) -> tuple[MultiIndex, ...]:
    """All C(N, q) increasing multi-indices of degree q in lexicographic order."""
    _check_degree(n, q)
    return tuple(MultiIndex(c, n) for c in combinations(range(1, n + 1), q))


@lru_cache(maxsize=None)
def _rank_table(n: int, q: int) -> dict[tuple[int, ...], int]:
    return {mi.entries: k for k, mi in enumerate(enumerate_multi_indices(n, q))}


def rank_of(index: MultiIndex) -> int:
    """Lexicographic rank of ``index`` in {0, ..., C(N,q) - 1}."""
    return _rank_table(index.ambient, index.degree)[index.entries]


def component_count(n: int, q: int) -> int:
    """Number of components of a q-form in R^N."""
    _check_degree(n, q)
    return comb(n, q)


@lru_cache(maxsize=None)
def incidence_table(n: int, q: int) -> tuple[IncidenceEntry, ...]:
    """Signed incidence of d from degree q to q+1.

    Entries are grouped by target in lexicographic order and, within a
    target, by insertion position. Degree q = N yields an empty table.
    """
    _check_degree(n, q)
    if q == n:
        return ()
    entries = []
    for target in enumerate_multi_indices(n, q + 1):
        for position, direction in enumerate(target.entries):
            source = MultiIndex(
                target.entries[:position] + target.entries[position + 1:], n
            )
            sign = -1 if position % 2 else 1
            entries.append(IncidenceEntry(source, target, direction, sign))
    return tuple(entries)


def component_labels(n: int, q: int) -> list[str]:
    """Printable component order, e.g. ``['(1,2)', '(1,3)', ...]``."""
    return [str(mi) for mi in enumerate_multi_indices(n, q)]
