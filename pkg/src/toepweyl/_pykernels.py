"""NumPy implementations of the compiled kernels (same signatures)."""

import math

import numpy as np

_CHUNK = 2_000_000


def neumaier_sum(a):
    return math.fsum(np.asarray(a, dtype=float))


def neumaier_dot(a, b):
    return math.fsum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float))


def atom_convolution(x, loc, w, nodes, coef, scale, cutoff, kind):
    x = np.ascontiguousarray(x, dtype=float)
    loc = np.ascontiguousarray(loc, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    coef = np.asarray(coef, dtype=float)
    out = np.zeros(x.size)
    if loc.size == 0:
        return out
    rows = max(1, _CHUNK // max(1, loc.size))
    for start in range(0, x.size, rows):
        xs = x[start : start + rows]
        u = scale * (xs[:, None] - loc[None, :])
        inside = np.abs(u) < cutoff
        acc = np.zeros(xs.size)
        if kind == 2:
            acc += ((u >= cutoff) * w[None, :]).sum(axis=1)
        ii, jj = np.nonzero(inside)
        if ii.size:
            uu = u[ii, jj]
            vals = np.empty(ii.size)
            step = max(1, _CHUNK // max(1, nodes.size))
            for s in range(0, ii.size, step):
                arg = np.outer(uu[s : s + step], nodes)
                if kind == 2:
                    g = np.sin(arg) / nodes @ coef + 0.5
                else:
                    g = np.cos(arg) @ coef
                    if kind == 1:
                        g = g * g
                vals[s : s + step] = g
            np.add.at(acc, ii, w[jj] * vals)
        out[start : start + rows] = acc
    return out
