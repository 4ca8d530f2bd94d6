"""Finite-difference weights and banded derivative matrices on uniform 1D grids."""

import numpy as np
import scipy.sparse as sp


def fd_weights(z, x, m):
    """Fornberg weights for derivatives 0..m at point ``z`` from nodes ``x``.

    Returns an array of shape (m + 1, len(x)); row k holds the weights of
    the k-th derivative.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def _stencil_nodes(i, n, width):
    """Index window of ``width`` nodes around ``i``, clipped to [0, n)."""
    lo = i - width // 2
    lo = max(0, min(lo, n - width))
    return np.arange(lo, lo + width)


def derivative_matrix(n, h, deriv, order=4):
    """Sparse matrix of the ``deriv``-th derivative on ``n`` uniform nodes.

    Interior rows use centred stencils; rows near the ends switch to
    one-sided stencils of the same formal order.
    """
    if n < order + 2:
        raise ValueError("too few nodes for the requested stencil")
    centred = 2 * ((deriv + order - 1) // 2) + 1
    onesided = deriv + order
    rows, cols, vals = [], [], []
    half = centred // 2
    for i in range(n):
        if half <= i < n - half:
            idx = np.arange(i - half, i + half + 1)
        else:
            idx = _stencil_nodes(i, n, onesided)
        w = fd_weights(float(i), idx.astype(float), deriv)[deriv] / h**deriv
        rows.extend([i] * len(idx))
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def endpoint_weights(n, h, deriv, at_start, order=4):
    """One-sided weights for the ``deriv``-th derivative at an end node.

    Returns (indices, weights) over the first or last ``deriv + order``
    nodes of a side.
    """
    width = deriv + order
    idx = np.arange(width) if at_start else np.arange(n - width, n)
    z = 0.0 if at_start else float(n - 1)
    w = fd_weights(z, idx.astype(float), deriv)[deriv] / h**deriv
    return idx, w
