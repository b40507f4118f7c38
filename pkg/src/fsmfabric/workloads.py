"""Workload generation and matrix file I/O.

Random matrices use exact-count sampling: a rate r over an R x C matrix
gives exactly round((1 - r) * R * C) nonzeros, so sparsity buckets stay
crisp even for small shapes.  Nonzero values are INT8 and never zero.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse

from .kernels.patterns import NM, Window

MAX_EVALUATED_RATE = 0.95


class OutOfEvaluatedRange(UserWarning):
    pass


@dataclass(frozen=True)
class UniformRandom:
    rate: float


@dataclass(frozen=True)
class SparsitySpec:
    kind: object            # UniformRandom | NM | Window
    seed: int = 0


def seed_for(*parts) -> np.random.Generator:
    """Generator keyed on a tuple of non-negative ints (stable across runs)."""
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def _values(rng, n, lo=-128, hi=127):
    v = rng.integers(lo, hi, size=n, endpoint=True)
    v[v == 0] = 1
    return v


def gen_matrix(rows, cols, spec: SparsitySpec, lo=-128, hi=127) -> np.ndarray:
    if rows <= 0 or cols <= 0:
        raise ValueError(f"dimensions must be positive, got {rows}x{cols}")
    rng = np.random.default_rng(spec.seed)
    k = spec.kind
    out = np.zeros((rows, cols), dtype=np.int64)
    if isinstance(k, UniformRandom):
        if not 0 <= k.rate <= 1:
            raise ValueError(f"sparsity rate {k.rate} outside [0, 1]")
        if k.rate > MAX_EVALUATED_RATE:
            warnings.warn(f"sparsity {k.rate} is beyond the evaluated range (<= {MAX_EVALUATED_RATE})",
                          OutOfEvaluatedRange, stacklevel=2)
        nnz = int(round((1 - k.rate) * rows * cols))
        pos = rng.choice(rows * cols, size=nnz, replace=False)
        out.flat[pos] = _values(rng, nnz, lo, hi)
    elif isinstance(k, NM):
        if cols % k.m:
            raise ValueError(f"{cols} columns are not a multiple of the block size {k.m}")
        nb = cols // k.m
        for r in range(rows):
            for b in range(nb):
                sel = rng.choice(k.m, size=k.n, replace=False)
                out[r, b * k.m + sel] = _values(rng, k.n, lo, hi)
    elif isinstance(k, Window):
        if rows != k.seq_len or cols != k.seq_len:
            raise ValueError(f"window pattern needs a {k.seq_len}x{k.seq_len} matrix")
        m = k.mask()
        out[m] = _values(rng, int(m.sum()), lo, hi)
    else:
        raise TypeError(f"unknown sparsity kind {k!r}")
    return out


def gen_dense(rows, cols, seed, lo=-128, hi=127) -> np.ndarray:
    return seed_for(seed, rows, cols).integers(lo, hi, size=(rows, cols), endpoint=True)


def gen_mask(rows, cols, rate, seed) -> np.ndarray:
    """Exact-count boolean mask with the given fraction of False."""
    rng = np.random.default_rng(seed)
    keep = int(round((1 - rate) * rows * cols))
    m = np.zeros(rows * cols, dtype=bool)
    m[rng.choice(rows * cols, size=keep, replace=False)] = True
    return m.reshape(rows, cols)


# --- files -----------------------------------------------------------------

def write_mtx(path, A):
    scipy.io.mmwrite(path, scipy.sparse.coo_matrix(np.asarray(A)), field="integer")


def read_mtx(path) -> np.ndarray:
    m = scipy.io.mmread(path)
    if scipy.sparse.issparse(m):
        m = m.toarray()
    return np.asarray(m).astype(np.int64)


def write_dense(path, A):
    np.savetxt(path, np.asarray(A), fmt="%d")


def read_dense(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, dtype=np.int64))


def read_matrix(path) -> np.ndarray:
    """Matrix Market when the file says so, whitespace text otherwise."""
    with open(path) as fh:
        head = fh.readline()
    if head.startswith("%%MatrixMarket"):
        return read_mtx(path)
    return read_dense(path)
