"""Multi-indices over N^d and origin-anchored truncation boxes.

Axes are numbered from 0. Fibers of a box are linearized with axis 0
varying fastest, so for a box with sides (m0, m1, ...) the rank of
alpha is ``alpha[0] + m0 * alpha[1] + m0 * m1 * alpha[2] + ...``.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterator, Sequence

import numpy as np

from .errors import IndexOutsideBox


class _OutOfLattice:
    """Marker for ``alpha - e_j`` when ``alpha_j == 0``.

    Weights indexed by such a point are read as zero operators.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "OUT_OF_LATTICE"


OUT_OF_LATTICE = _OutOfLattice()


class MultiIndex(tuple):
    """An immutable point of N^d."""

    def __new__(cls, entries: Sequence[int]):
        entries = tuple(int(a) for a in entries)
        if len(entries) < 1:
            raise ValueError("a multi-index needs at least one entry")
        if any(a < 0 for a in entries):
            raise ValueError(f"multi-index entries must be nonnegative, got {entries}")
        return super().__new__(cls, entries)

    @property
    def d(self) -> int:
        return len(self)

    @property
    def order(self) -> int:
        """``|alpha|``, the sum of the entries."""
        return sum(self)

    @classmethod
    def zero(cls, d: int) -> "MultiIndex":
        return cls((0,) * d)

    @classmethod
    def unit(cls, d: int, j: int) -> "MultiIndex":
        e = [0] * d
        e[j] = 1
        return cls(e)

    def __add__(self, other):
        if len(other) != len(self):
            raise ValueError("multi-index arity mismatch")
        return MultiIndex(a + b for a, b in zip(self, other))

    def __repr__(self):
        return f"MultiIndex({tuple(self)})"


def shift_index(alpha: Sequence[int], j: int, delta: int):
    """Return ``alpha + delta * e_j`` or ``OUT_OF_LATTICE``."""
    if delta not in (1, -1):
        raise ValueError("delta must be +1 or -1")
    if not 0 <= j < len(alpha):
        raise ValueError(f"axis {j} out of range for d={len(alpha)}")
    entries = list(alpha)
    if delta == -1 and entries[j] == 0:
        return OUT_OF_LATTICE
    entries[j] += delta
    return MultiIndex(entries)


class Box:
    """Fibers ``{alpha : 0 <= alpha_j < sides[j]}``."""

    __slots__ = ("sides", "_strides")

    def __init__(self, sides: Sequence[int]):
        sides = tuple(int(m) for m in sides)
        if not sides:
            raise ValueError("a box needs at least one side")
        if any(m < 1 for m in sides):
            raise ValueError(f"box sides must be positive, got {sides}")
        self.sides = sides
        strides = [1]
        for m in sides[:-1]:
            strides.append(strides[-1] * m)
        self._strides = tuple(strides)

    @classmethod
    def cube(cls, m: int, d: int) -> "Box":
        return cls((m,) * d)

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def volume(self) -> int:
        return math.prod(self.sides)

    @property
    def strides(self) -> tuple[int, ...]:
        return self._strides

    def __contains__(self, alpha) -> bool:
        return len(alpha) == self.d and all(0 <= a < m for a, m in zip(alpha, self.sides))

    def __eq__(self, other):
        return isinstance(other, Box) and self.sides == other.sides

    def __hash__(self):
        return hash(self.sides)

    def __repr__(self):
        return f"Box({self.sides})"

    def expanded(self, k: int = 1) -> "Box":
        return Box(m + k for m in self.sides)

    def contains_box(self, other: "Box") -> bool:
        return other.d == self.d and all(a <= b for a, b in zip(other.sides, self.sides))

    def __iter__(self) -> Iterator[MultiIndex]:
        """Fibers in rank order."""
        for rev in itertools.product(*(range(m) for m in reversed(self.sides))):
            yield MultiIndex(rev[::-1])

    def rank(self, alpha: Sequence[int]) -> int:
        if alpha not in self:
            raise IndexOutsideBox(f"{tuple(alpha)} is not a fiber of {self}")
        return sum(a * s for a, s in zip(alpha, self._strides))

    def unrank(self, k: int) -> MultiIndex:
        if not 0 <= k < self.volume:
            raise IndexOutsideBox(f"rank {k} outside [0, {self.volume})")
        entries = []
        for m in self.sides:
            k, a = divmod(k, m)
            entries.append(a)
        return MultiIndex(entries)

    def grid(self) -> np.ndarray:
        """All fibers as a ``(volume, d)`` integer array in rank order."""
        ranks = np.arange(self.volume)
        return np.stack(np.unravel_index(ranks, self.sides, order="F"), axis=1)

    def ranks_of(self, alphas: np.ndarray) -> np.ndarray:
        """Vectorized rank for an ``(N, d)`` array of fibers inside the box."""
        alphas = np.asarray(alphas)
        return alphas @ np.asarray(self._strides)


def rank(alpha: Sequence[int], box: Box) -> int:
    return box.rank(alpha)


def unrank(k: int, box: Box) -> MultiIndex:
    return box.unrank(k)


def multi_indices_up_to(d: int, degree: int) -> list[MultiIndex]:
    """All alpha in N^d with ``|alpha| <= degree``, graded then lexicographic."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            e = [0] * d
            for j in combo:
                e[j] += 1
            out.append(MultiIndex(e))
    return sorted(set(out), key=lambda a: (a.order, tuple(reversed(a))))
