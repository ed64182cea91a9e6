# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the dense-layer hot path.

Small-matrix training steps are dominated by Python/numpy dispatch overhead,
so the per-layer loops are written out in C.  Contracts match _purepy.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


cdef void _affine(double[:, ::1] X, double[:, ::1] W, double[::1] b,
                  double[:, ::1] out, bint relu) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], din = X.shape[1], dout = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xk
    for i in range(n):
        for j in range(dout):
            out[i, j] = b[j]
        for k in range(din):
            xk = X[i, k]
            if xk != 0.0:
                for j in range(dout):
                    out[i, j] += xk * W[k, j]
        if relu:
            for j in range(dout):
                if out[i, j] < 0.0:
                    out[i, j] = 0.0


def forward_stack(X, list weights, list biases, int n_relu):
    """See _purepy.forward_stack."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef list acts = [X]
    cdef int i, L = len(weights)
    cdef double[:, ::1] h = X
    for i in range(L):
        W = weights[i]
        b = biases[i]
        out = np.empty((h.shape[0], W.shape[1]), dtype=np.float64)
        _affine(h, W, b, out, i < n_relu)
        acts.append(out)
        h = out
    return acts


def backward_stack(list acts, list weights, int n_relu, d_out):
    """See _purepy.backward_stack."""
    cdef int L = len(weights)
    cdef list grads_w = [None] * L
    cdef list grads_b = [None] * L
    cdef double[:, ::1] d = np.ascontiguousarray(d_out, dtype=np.float64)
    cdef double[:, ::1] a, act, W, gW, dprev
    cdef double[::1] gb
    cdef Py_ssize_t n, din, dout, i, j, k
    cdef int li
    cdef double dij
    for li in range(L - 1, -1, -1):
        a = acts[li]
        W = weights[li]
        n = a.shape[0]
        din = a.shape[1]
        dout = W.shape[1]
        if li < n_relu:
            act = acts[li + 1]
            d = np.asarray(d).copy()
            with nogil:
                for i in range(n):
                    for j in range(dout):
                        if act[i, j] <= 0.0:
                            d[i, j] = 0.0
        gW_arr = np.zeros((din, dout), dtype=np.float64)
        gb_arr = np.zeros(dout, dtype=np.float64)
        dprev_arr = np.zeros((n, din), dtype=np.float64)
        gW = gW_arr
        gb = gb_arr
        dprev = dprev_arr
        with nogil:
            for i in range(n):
                for j in range(dout):
                    dij = d[i, j]
                    if dij != 0.0:
                        gb[j] += dij
                        for k in range(din):
                            gW[k, j] += a[i, k] * dij
                            dprev[i, k] += dij * W[k, j]
                    else:
                        gb[j] += dij
        grads_w[li] = gW_arr
        grads_b[li] = gb_arr
        d = dprev_arr
    return np.asarray(d), grads_w, grads_b


def adam_update(param, grad, m, v, long t, double lr,
                double beta1, double beta2, double eps):
    """See _purepy.adam_update (in place on param, m, v)."""
    cdef double[::1] p1 = param.reshape(-1)
    cdef double[::1] g1 = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] m1 = m.reshape(-1)
    cdef double[::1] v1 = v.reshape(-1)
    cdef Py_ssize_t i, n = p1.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double g, mhat, vhat
    with nogil:
        for i in range(n):
            g = g1[i]
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g
            v1[i] = beta2 * v1[i] + (1.0 - beta2) * g * g
            mhat = m1[i] / c1
            vhat = v1[i] / c2
            p1[i] -= lr * mhat / (sqrt(vhat) + eps)
