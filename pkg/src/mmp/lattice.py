"""Translation-invariant jump kernels on periodic tori."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .rates import as_number


@dataclass(frozen=True)
class Kernel:
    d: int
    offsets: tuple  # ((displacement tuple), probability)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or d = 2 tori are supported")
        for v, _ in self.offsets:
            if len(v) != self.d:
                raise ValueError(f"offset {v} does not match dimension {self.d}")
        total = sum(p for _, p in self.offsets)
        if total != 1 and abs(float(total) - 1) > 1e-12:
            raise ValueError(f"kernel probabilities sum to {total}, not 1")

    @classmethod
    def from_pairs(cls, d: int, pairs: Sequence) -> "Kernel":
        offs = []
        for v, p in pairs:
            v = (int(v),) if np.isscalar(v) else tuple(int(x) for x in v)
            offs.append((v, as_number(p)))
        return cls(d, tuple(offs))

    @classmethod
    def totally_asymmetric(cls, d: int = 1) -> "Kernel":
        return cls(d, (((1,) + (0,) * (d - 1), Fraction(1)),))

    @classmethod
    def nearest_neighbour(cls, d: int = 1, right: Fraction = Fraction(1, 2)) -> "Kernel":
        right = as_number(right)
        offs = []
        for axis in range(d):
            e = [0] * d
            e[axis] = 1
            plus, minus = tuple(e), tuple(-x for x in e)
            offs.append((plus, right / d))
            offs.append((minus, (1 - right) / d))
        return cls(d, tuple((v, p) for v, p in offs if p != 0))

    @property
    def symmetry(self) -> str:
        table = {v: p for v, p in self.offsets}
        sym = all(table.get(tuple(-x for x in v), 0) == p for v, p in self.offsets)
        return "symmetric" if sym else "asymmetric"

    def n_sites(self, L: int) -> int:
        return L ** self.d

    def target(self, x: int, v: tuple, L: int) -> int:
        if self.d == 1:
            return (x + v[0]) % L
        i, j = divmod(x, L)
        return ((i + v[0]) % L) * L + (j + v[1]) % L

    def torus_matrix(self, L: int) -> dict:
        """p(x, y) restricted to the torus, x != y (moves onto x itself are dropped)."""
        out: dict = {}
        for x in range(self.n_sites(L)):
            for v, p in self.offsets:
                y = self.target(x, v, L)
                if y != x and p != 0:
                    out[(x, y)] = out.get((x, y), 0) + p
        return out

    def neighbour_arrays(self, L: int):
        """(targets[j, x], probs[j]) as float arrays for the simulator."""
        n = self.n_sites(L)
        targets = np.array([[self.target(x, v, L) for x in range(n)] for v, _ in self.offsets],
                           dtype=np.int64)
        probs = np.array([float(p) for _, p in self.offsets])
        return targets, probs
