"""Dense float64 kernels with a fixed summation order.

Matrices and vectors are plain ``numpy.float64`` arrays. Products are not
delegated to BLAS: every output entry accumulates over the inner dimension
left to right, so a row computed inside a batch is bit-identical to the
same row computed alone. Equivalence tests between code paths rely on this.
"""

import numba
import numpy as np

from .errors import ShapeError


@numba.njit(nogil=True, cache=True)
def _gemm(A, B, scale):
    n, inner = A.shape
    m = B.shape[1]
    C = np.zeros((n, m))
    for i in range(n):
        for k in range(inner):
            a = A[i, k]
            for j in range(m):
                C[i, j] += a * B[k, j]
        s = scale[i]
        for j in range(m):
            C[i, j] *= s
    return C


@numba.njit(nogil=True, cache=True)
def _gemm_unscaled(A, B):
    n, inner = A.shape
    m = B.shape[1]
    C = np.zeros((n, m))
    for i in range(n):
        for k in range(inner):
            a = A[i, k]
            for j in range(m):
                C[i, j] += a * B[k, j]
    return C


@numba.njit(nogil=True, cache=True)
def _outer_sum(H, G, scale):
    batch, p = H.shape
    q = G.shape[1]
    out = np.zeros((p, q))
    for b in range(batch):
        s = scale[b]
        if s == 0.0:
            continue
        for i in range(p):
            a = s * H[b, i]
            for j in range(q):
                out[i, j] += a * G[b, j]
    return out


def _as_2d(name, A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    return A


def matmul(A, B):
    """Return ``A @ B`` for 2-D float64 arrays."""
    A = _as_2d("A", A)
    B = _as_2d("B", B)
    if A.shape[1] != B.shape[0]:
        raise ShapeError(f"cannot multiply {A.shape} by {B.shape}")
    return _gemm_unscaled(A, B)


def batched_affine(H, W, scale=1.0):
    """Return ``scale * H @ W`` for a batch of row vectors ``H``.

    ``scale`` is either a scalar or one factor per row of ``H``; row ``r``
    of the result is ``scale[r] * H[r] @ W``.
    """
    H = _as_2d("H", H)
    W = _as_2d("W", W)
    if H.shape[1] != W.shape[0]:
        raise ShapeError(f"cannot multiply {H.shape} by {W.shape}")
    scale = _row_factors(scale, H.shape[0])
    return _gemm(H, W, scale)


def scaled_outer_sum(H, G, scale=1.0):
    """Return ``sum_b scale[b] * outer(H[b], G[b])``, i.e. ``H.T @ diag(scale) @ G``.

    Rows are accumulated in batch order. This is the weight gradient of a
    layer whose residual is ``scale * h @ W``.
    """
    H = _as_2d("H", H)
    G = _as_2d("G", G)
    if H.shape[0] != G.shape[0]:
        raise ShapeError(f"batch mismatch between {H.shape} and {G.shape}")
    scale = _row_factors(scale, H.shape[0])
    return _outer_sum(H, G, scale)


def _row_factors(scale, rows):
    if np.ndim(scale) == 0:
        return np.full(rows, float(scale))
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (rows,):
        raise ShapeError(f"scale of shape {scale.shape} does not match {rows} rows")
    return scale
