"""Sparsity patterns shared by the kernels and the workload generator."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Unstructured:
    mask: np.ndarray = None     # explicit bitmask where one is needed (SDDMM)


@dataclass(frozen=True)
class NM:
    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.n <= self.m:
            raise ValueError(f"N:M needs 1 <= n <= m, got {self.n}:{self.m}")

    def holds(self, A) -> bool:
        """Exactly n nonzeros in every aligned m-block along each row."""
        A = np.asarray(A)
        if A.shape[1] % self.m:
            return False
        blocks = (A != 0).reshape(A.shape[0], -1, self.m).sum(axis=2)
        return bool(np.all(blocks == self.n))


@dataclass(frozen=True)
class Window:
    width: int
    seq_len: int

    def __post_init__(self):
        if not 1 <= self.width <= self.seq_len:
            raise ValueError(f"window width {self.width} must lie in 1..{self.seq_len}")

    def start(self, row):
        # band is centred on the diagonal and shifted inwards at the edges
        return min(max(row - self.width // 2, 0), self.seq_len - self.width)

    def mask(self):
        L = self.seq_len
        out = np.zeros((L, L), dtype=bool)
        for r in range(L):
            s = self.start(r)
            out[r, s:s + self.width] = True
        return out
