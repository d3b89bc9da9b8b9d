"""Pure-numpy implementations of the hot array kernels.

Mirrors the API of the compiled module ``ebsurv._kernels``; one of the two
is selected at import time by :mod:`ebsurv.backend`.  All functions expect
C-contiguous float64 arrays.
"""

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray, trans_a: bool = False, trans_b: bool = False) -> np.ndarray:
    if trans_a:
        a = a.T
    if trans_b:
        b = b.T
    return a @ b


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x @ w + b with b broadcast over rows."""
    return x @ w + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cotangent of relu: g where x > 0, else 0."""
    return np.where(x > 0.0, g, 0.0)


def col_sum(g: np.ndarray) -> np.ndarray:
    return g.sum(axis=0)


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp(x))) with max-shift stabilization."""
    m = x.max(axis=1)
    return m + np.log(np.sum(np.exp(x - m[:, None]), axis=1))


def softmax_rows(x: np.ndarray, lse: np.ndarray) -> np.ndarray:
    """exp(x - lse[:, None]) for a precomputed row-wise log-sum-exp."""
    return np.exp(x - lse[:, None])
