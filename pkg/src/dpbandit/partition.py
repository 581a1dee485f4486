"""Adaptive hypercube partition of the context space [0, 1]^d.

Each learner owns one :class:`PartitionTree`. A node at level ``l`` is a
hypercube of side ``m**-l``; when the number of arrivals recorded in an
active node reaches ``ceil(A * m**(p*l))`` it is replaced by its ``m**d``
children. Only split events are stored, so children exist implicitly until
they are located or written to.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

from . import kernels
from .errors import InvalidInputError, StaleHandleError

MAX_DIMENSION = 8
MAX_CHILDREN = 4096


@dataclass(frozen=True, order=True)
class SubspaceId:
    level: int
    cell: tuple[int, ...]

    def bounds(self, m: int) -> list[tuple[float, float]]:
        side = float(m) ** -self.level
        return [(c * side, (c + 1) * side) for c in self.cell]

    def contains(self, x: Sequence[float], m: int) -> bool:
        n = m ** self.level
        return kernels.locate_cell(x, n) == self.cell

    def parent(self, m: int) -> SubspaceId:
        if self.level == 0:
            raise InvalidInputError("the root has no parent")
        return SubspaceId(self.level - 1, tuple(c // m for c in self.cell))

    def children(self, m: int) -> list[SubspaceId]:
        base = [c * m for c in self.cell]
        out = []
        for offs in itertools.product(range(m), repeat=len(self.cell)):
            out.append(SubspaceId(self.level + 1, tuple(b + o for b, o in zip(base, offs))))
        return out

    def __str__(self):
        return f"L{self.level}:" + ".".join(map(str, self.cell))


class SplitDecision(Enum):
    NO_SPLIT = 0
    SPLIT = 1


def split_threshold(A: float, m: int, p: float, level: int) -> int:
    """Integer arrival count at which a level-``level`` node splits."""
    # round before ceil so that e.g. 5 * 2.0**1 is not pushed to 11 by fp error
    return max(1, math.ceil(round(A * float(m) ** (p * level), 9)))


def max_level_bound(T: int, A: float, m: int, p: float) -> int:
    """Upper bound on the deepest active level after ``T`` arrivals."""
    if T <= A:
        return 1
    return math.ceil(math.log(T / A, m) / p) + 1


class PartitionTree:
    """The set of active subspaces for one learner.

    ``base_level`` > 0 starts from a uniform grid at that level; with
    ``frozen=True`` the tree never splits (the uniform-partition baseline).
    """

    def __init__(self, m: int, d: int, A: float = 1.0, p: float = 1.0,
                 base_level: int = 0, frozen: bool = False):
        if m < 2:
            raise InvalidInputError("branching factor m must be >= 2")
        if not 1 <= d <= MAX_DIMENSION:
            raise InvalidInputError(f"dimension d must be in [1, {MAX_DIMENSION}]")
        if m ** d > MAX_CHILDREN:
            raise InvalidInputError(f"m**d = {m ** d} exceeds {MAX_CHILDREN}")
        if A <= 0 or p <= 0:
            raise InvalidInputError("A and p must be positive")
        if base_level < 0:
            raise InvalidInputError("base_level must be >= 0")
        self.m = m
        self.d = d
        self.A = float(A)
        self.p = float(p)
        self.base_level = base_level
        self.frozen = frozen
        self.arrivals: dict[SubspaceId, int] = {}
        # split nodes strictly deeper than base_level; shallower ones are implied
        self._split: set[SubspaceId] = set()
        self._thresholds: dict[int, int] = {}
        self._max_level = base_level

    @property
    def root(self) -> SubspaceId:
        return SubspaceId(0, (0,) * self.d)

    @property
    def max_level(self) -> int:
        return self._max_level

    def threshold(self, level: int) -> int:
        th = self._thresholds.get(level)
        if th is None:
            th = self._thresholds[level] = split_threshold(self.A, self.m, self.p, level)
        return th

    def is_split(self, c: SubspaceId) -> bool:
        return c.level < self.base_level or c in self._split

    def is_active(self, c: SubspaceId) -> bool:
        if c.level < self.base_level or c in self._split:
            return False
        if len(c.cell) != self.d or any(not 0 <= v < self.m ** c.level for v in c.cell):
            return False
        node = c
        while node.level > self.base_level:
            node = node.parent(self.m)
            if node not in self._split:
                return False
        return True

    def locate(self, x: Sequence[float]) -> SubspaceId:
        if len(x) != self.d:
            raise InvalidInputError(f"context has dimension {len(x)}, expected {self.d}")
        level = self.base_level
        m = self.m
        c = SubspaceId(level, kernels.locate_cell(x, m ** level))
        split = self._split
        while c in split:
            level += 1
            c = SubspaceId(level, kernels.locate_cell(x, m ** level))
        return c

    def record_arrival(self, c: SubspaceId) -> SplitDecision:
        if not self.is_active(c):
            raise StaleHandleError(f"subspace {c} is not active")
        return self._record(c)

    def _record(self, c: SubspaceId) -> SplitDecision:
        # caller guarantees c came from locate() this round
        n = self.arrivals.get(c, 0) + 1
        self.arrivals[c] = n
        if self.frozen or n < self.threshold(c.level):
            return SplitDecision.NO_SPLIT
        return SplitDecision.SPLIT

    def split(self, c: SubspaceId) -> list[SubspaceId]:
        if self.frozen:
            raise InvalidInputError("a frozen partition cannot split")
        if not self.is_active(c):
            raise StaleHandleError(f"subspace {c} is not active")
        self._split.add(c)
        self.arrivals.pop(c, None)
        if c.level + 1 > self._max_level:
            self._max_level = c.level + 1
        return c.children(self.m)

    def observe(self, x: Sequence[float]) -> tuple[SubspaceId, list[SubspaceId] | None]:
        """Locate ``x``, count the arrival and split if due."""
        c = self.locate(x)
        if self._record(c) is SplitDecision.SPLIT:
            self._split.add(c)
            self.arrivals.pop(c, None)
            if c.level + 1 > self._max_level:
                self._max_level = c.level + 1
            return c, c.children(self.m)
        return c, None

    def active(self) -> Iterator[SubspaceId]:
        """Enumerate the active leaves (materialises every child of split nodes)."""
        n = self.m ** self.base_level
        stack = [SubspaceId(self.base_level, cell)
                 for cell in itertools.product(range(n), repeat=self.d)]
        while stack:
            c = stack.pop()
            if c in self._split:
                stack.extend(c.children(self.m))
            else:
                yield c

    def arrival_count(self, c: SubspaceId) -> int:
        return self.arrivals.get(c, 0)

    def split_events(self) -> list[SubspaceId]:
        return sorted(self._split)
