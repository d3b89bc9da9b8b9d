# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled array kernels: BLAS-backed affine maps plus single-pass
elementwise and row-reduction loops.

Same API as ``ebsurv._kernels_py``; :mod:`ebsurv.backend` picks whichever
imports.  All inputs must be C-contiguous float64.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _gemm_rowmajor(double* a_ptr, int a_rows, int a_cols, bint trans_a,
                         double* b_ptr, int b_rows, int b_cols, bint trans_b,
                         double* c_ptr, double alpha, double beta) noexcept nogil:
    # Row-major C = alpha * op(a) @ op(b) + beta * C, done in column-major
    # BLAS as C^T = op(b)^T @ op(a)^T with swapped operands.
    cdef int m, n, k, lda, ldb, ldc
    cdef char ta, tb
    if trans_a:
        m = a_cols
        k = a_rows
    else:
        m = a_rows
        k = a_cols
    n = b_rows if trans_b else b_cols
    ta = c'T' if trans_b else c'N'
    tb = c'T' if trans_a else c'N'
    lda = b_cols
    ldb = a_cols
    ldc = n
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b_ptr, &lda, a_ptr, &ldb, &beta, c_ptr, &ldc)


def matmul(double[:, ::1] a, double[:, ::1] b, bint trans_a=False, bint trans_b=False):
    cdef int m = a.shape[1] if trans_a else a.shape[0]
    cdef int k = a.shape[0] if trans_a else a.shape[1]
    cdef int n = b.shape[0] if trans_b else b.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    if m == 0 or n == 0:
        return out
    if k == 0:
        out[...] = 0.0
        return out
    _gemm_rowmajor(&a[0, 0], a.shape[0], a.shape[1], trans_a,
                   &b[0, 0], b.shape[0], b.shape[1], trans_b,
                   &c[0, 0], 1.0, 0.0)
    return out


def affine(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """x @ w + b, with the bias added through the BLAS accumulator."""
    cdef Py_ssize_t n_rows = x.shape[0], n_out = w.shape[1]
    cdef Py_ssize_t i, j
    out = np.empty((n_rows, n_out), dtype=np.float64)
    cdef double[:, ::1] c = out
    with nogil:
        for i in range(n_rows):
            for j in range(n_out):
                c[i, j] = b[j]
    if n_rows == 0 or n_out == 0 or x.shape[1] == 0:
        return out
    _gemm_rowmajor(&x[0, 0], x.shape[0], x.shape[1], False,
                   &w[0, 0], w.shape[0], w.shape[1], False,
                   &c[0, 0], 1.0, 1.0)
    return out


def relu(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_backward(double[:, ::1] g, double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out


def col_sum(double[:, ::1] g):
    cdef Py_ssize_t n = g.shape[0], m = g.shape[1]
    cdef Py_ssize_t i, j
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[j] += g[i, j]
    return out


def logsumexp_rows(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, m):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(m):
                s += exp(x[i, j] - mx)
            o[i] = mx + log(s)
    return out


def softmax_rows(double[:, ::1] x, double[::1] lse):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = exp(x[i, j] - lse[i])
    return out
