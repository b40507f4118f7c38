"""Reference products.  Two independently written accumulation orders are
kept so that each can check the other."""

import numpy as np


def _check(A, B):
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape} x {B.shape}")
    return A, B


def oracle_spmm(A, B) -> np.ndarray:
    """C[m][n] += A[m][k] * B[k][n], m and k looped, n as a numpy row."""
    A, B = _check(A, B)
    M, K = A.shape
    C = np.zeros((M, B.shape[1]), dtype=np.int64)
    for m in range(M):
        row = C[m]
        for k in range(K):
            a = A[m, k]
            if a:
                row += a * B[k]
    return C


def oracle_spmm_loops(A, B) -> np.ndarray:
    """Pure-Python inner-product order (n outer, k inner).  Slow; small inputs."""
    A, B = _check(A, B)
    M, K = A.shape
    N = B.shape[1]
    a = A.tolist()
    bt = B.T.tolist()
    return np.array([[sum(x * y for x, y in zip(a[m], bt[n])) for n in range(N)]
                     for m in range(M)], dtype=np.int64).reshape(M, N)


def oracle_sddmm(A, B, mask) -> np.ndarray:
    A, B = _check(A, B)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (A.shape[0], B.shape[1]):
        raise ValueError(f"mask shape {mask.shape} does not match {(A.shape[0], B.shape[1])}")
    C = np.zeros(mask.shape, dtype=np.int64)
    for m, n in zip(*np.nonzero(mask)):
        C[m, n] = int(np.dot(A[m], B[:, n]))
    return C
