# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; ``kernels`` falls back to NumPy when this is absent."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


def neumaier_sum(const double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0, c = 0.0, t, v
    for i in range(n):
        v = a[i]
        t = s + v
        if fabs(s) >= fabs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def neumaier_dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0, c = 0.0, t, v
    for i in range(n):
        v = a[i] * b[i]
        t = s + v
        if fabs(s) >= fabs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def atom_convolution(const double[::1] x, const double[::1] loc, const double[::1] w,
                     const double[::1] nodes, const double[::1] coef,
                     double scale, double cutoff, int kind):
    """out[i] = sum_j w[j] g(x[i] - loc[j]) for a cosine-sum profile g.

    kind 0: g(y) = sum_q coef[q] cos(scale nodes[q] y)
    kind 1: g(y) = (sum_q coef[q] cos(scale nodes[q] y))**2
    kind 2: g(y) = 1/2 + sum_q coef[q] sin(scale nodes[q] y) / nodes[q], saturated
            to 0 or 1 once |scale y| >= cutoff
    """
    cdef Py_ssize_t i, j, q
    cdef Py_ssize_t nx = x.shape[0], na = loc.shape[0], nq = nodes.shape[0]
    cdef double y, u, acc, g
    out = np.zeros(nx, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(nx):
        acc = 0.0
        for j in range(na):
            y = x[i] - loc[j]
            u = scale * y
            if fabs(u) >= cutoff:
                if kind == 2 and u > 0:
                    acc += w[j]
                continue
            g = 0.0
            if kind == 2:
                for q in range(nq):
                    g += coef[q] * sin(u * nodes[q]) / nodes[q]
                g += 0.5
            else:
                for q in range(nq):
                    g += coef[q] * cos(u * nodes[q])
                if kind == 1:
                    g = g * g
            acc += w[j] * g
        o[i] = acc
    return out
