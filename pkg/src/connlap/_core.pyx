# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: radius pair search, symmetric block mat-vec and
per-point scatter matrices. ``_core_py`` holds the numpy equivalents."""

import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector

cnp.import_array()


def pairs_within(const double[:, ::1] X, double cutoff,
                 Py_ssize_t row_start, Py_ssize_t row_stop):
    """Pairs (i, j), row_start <= i < row_stop, i < j, with |xi - xj| <= cutoff.

    Returns int64 arrays I, J and the squared distances, ordered by (i, j).
    """
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double c2 = cutoff * cutoff, s, t
    cdef vector[long long] vi, vj
    cdef vector[double] vd
    with nogil:
        for i in range(row_start, row_stop):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(p):
                    t = X[i, k] - X[j, k]
                    s = s + t * t
                if s <= c2:
                    vi.push_back(i)
                    vj.push_back(j)
                    vd.push_back(s)
    cdef Py_ssize_t m = vi.size()
    I = np.empty(m, dtype=np.int64)
    J = np.empty(m, dtype=np.int64)
    D = np.empty(m, dtype=np.float64)
    cdef long long[::1] Iv = I
    cdef long long[::1] Jv = J
    cdef double[::1] Dv = D
    for k in range(m):
        Iv[k] = vi[k]
        Jv[k] = vj[k]
        Dv[k] = vd[k]
    return I, J, D


def block_matvec(Py_ssize_t n, Py_ssize_t q,
                 const long long[::1] I, const long long[::1] J,
                 const double[:, :, ::1] B, const double[::1] diag,
                 const double[::1] v):
    """S v for the symmetric block matrix with upper blocks B[e] at (I[e], J[e])
    and scalar diagonal blocks diag[i] * I_q."""
    cdef Py_ssize_t e, a, b, i, j, m = I.shape[0]
    cdef double acc_i, acc_j
    out = np.empty(n * q, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            for a in range(q):
                o[i * q + a] = diag[i] * v[i * q + a]
        if q == 1:
            for e in range(m):
                i = I[e]
                j = J[e]
                o[i] += B[e, 0, 0] * v[j]
                o[j] += B[e, 0, 0] * v[i]
        else:
            for e in range(m):
                i = I[e] * q
                j = J[e] * q
                for a in range(q):
                    acc_i = 0.0
                    acc_j = 0.0
                    for b in range(q):
                        acc_i = acc_i + B[e, a, b] * v[j + b]
                        acc_j = acc_j + B[e, b, a] * v[i + b]
                    o[i + a] += acc_i
                    o[j + a] += acc_j
    return out


def scatter_matrices(const double[:, ::1] X, const long long[::1] I,
                     const long long[::1] J, const double[::1] w):
    """Per-point sums of w (xj - xi)(xj - xi)^T over the symmetric pair list."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], m = I.shape[0]
    cdef Py_ssize_t e, i, j, a, b
    cdef double t
    out = np.zeros((n, p, p), dtype=np.float64)
    cdef double[:, :, ::1] C = out
    cdef double[64] diff
    if p > 64:
        raise ValueError("ambient dimension above 64 is not supported")
    with nogil:
        for e in range(m):
            i = I[e]
            j = J[e]
            for a in range(p):
                diff[a] = X[j, a] - X[i, a]
            for a in range(p):
                t = w[e] * diff[a]
                for b in range(p):
                    C[i, a, b] += t * diff[b]
                    C[j, a, b] += t * diff[b]
    return out
