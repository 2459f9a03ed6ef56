"""Compiled pairwise kernels for mini-batch discrimination.

Arrays use the (kernels, rows, dims) layout. Every kernel visits each
unordered row pair once and mirrors the result, relying on the symmetry of
the L1 distance.
"""

import numba
import numpy as np


@numba.njit(cache=True, fastmath=True)
def _sign(d):
    if d > 0:
        return 1.0
    if d < 0:
        return -1.0
    return 0.0


@numba.njit(cache=True, fastmath=True)
def similarity(mb):
    """e[b, i, j] = exp(-sum_c |mb[b, i, c] - mb[b, j, c]|); diagonal is 1."""
    n_kernels, n, n_dims = mb.shape
    e = np.empty((n_kernels, n, n))
    for b in range(n_kernels):
        x = mb[b]
        for i in range(n):
            e[b, i, i] = 1.0
            for j in range(i + 1, n):
                d = 0.0
                for c in range(n_dims):
                    d += abs(x[i, c] - x[j, c])
                v = np.exp(-d)
                e[b, i, j] = v
                e[b, j, i] = v
    return e


@numba.njit(cache=True, fastmath=True)
def similarity_grad(mb, e, g):
    """Gradient of sum_{b,i} g[b, i] * (sum_j e[b, i, j] - 1) w.r.t. mb.

    out[b, i, c] = -sum_j (g[b, i] + g[b, j]) e[b, i, j] sign(mb[b,i,c] - mb[b,j,c])
    """
    n_kernels, n, n_dims = mb.shape
    out = np.zeros((n_kernels, n, n_dims))
    for b in range(n_kernels):
        x = mb[b]
        gb = g[b]
        ob = out[b]
        for i in range(n):
            for j in range(i + 1, n):
                w = (gb[i] + gb[j]) * e[b, i, j]
                for c in range(n_dims):
                    t = w * _sign(x[i, c] - x[j, c])
                    ob[i, c] -= t
                    ob[j, c] += t
    return out


@numba.njit(cache=True, fastmath=True)
def signed_sum_sym(mb, q):
    """out[b, i, c] = sum_j q[b, i, j] sign(mb[b,i,c] - mb[b,j,c]) for symmetric q."""
    n_kernels, n, n_dims = mb.shape
    out = np.zeros((n_kernels, n, n_dims))
    for b in range(n_kernels):
        x = mb[b]
        ob = out[b]
        for i in range(n):
            for j in range(i + 1, n):
                w = q[b, i, j]
                for c in range(n_dims):
                    t = w * _sign(x[i, c] - x[j, c])
                    ob[i, c] += t
                    ob[j, c] -= t
    return out


@numba.njit(cache=True, fastmath=True)
def signed_contraction_sym(mb, hb):
    """k[b, i, j] = sum_c sign(mb[b,i,c] - mb[b,j,c]) (hb[b,i,c] - hb[b,j,c]); symmetric."""
    n_kernels, n, n_dims = mb.shape
    k = np.zeros((n_kernels, n, n))
    for b in range(n_kernels):
        x = mb[b]
        h = hb[b]
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for c in range(n_dims):
                    acc += _sign(x[i, c] - x[j, c]) * (h[i, c] - h[j, c])
                k[b, i, j] = acc
                k[b, j, i] = acc
    return k
