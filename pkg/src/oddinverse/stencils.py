"""Finite-difference weights and derivative matrices on a uniform node set."""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp


def fd_weights(nodes, x0, order):
    """Fornberg weights approximating the ``order``-th derivative at ``x0``.

    Parameters
    ----------
    nodes : array_like
        Stencil abscissae (distinct).
    x0 : float
        Evaluation point.
    order : int
        Derivative order, ``order < len(nodes)``.

    Returns
    -------
    numpy.ndarray
        One weight per node.
    """
    z = np.asarray(nodes, dtype=float)
    n = len(z)
    if order >= n:
        raise ValueError("stencil too short for derivative order %d" % order)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = z[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = z[i] - x0
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def stencil_window(i, npts, order):
    """Node indices of the second-order stencil used at node ``i``.

    Centred where it fits (``order + 2`` points for odd orders, ``order + 1``
    for even ones); otherwise a shifted window of ``order + 2`` points.
    """
    width = order + 2 if order % 2 else order + 1
    half = width // 2
    lo, hi = i - half, i + half
    if lo < 0 or hi > npts - 1:
        width = order + 2
        lo = min(max(i - width // 2, 0), npts - width)
        hi = lo + width - 1
    return np.arange(lo, hi + 1)


@lru_cache(maxsize=64)
def _unit_derivative_matrix(npts, order):
    rows, cols, vals = [], [], []
    for i in range(npts):
        idx = stencil_window(i, npts, order)
        rows.extend([i] * len(idx))
        cols.extend(idx)
        vals.extend(fd_weights(idx - i, 0.0, order))
    return sp.csr_matrix((vals, (rows, cols)), shape=(npts, npts))


def derivative_matrix(npts, dx, order):
    """Sparse ``npts x npts`` matrix of the ``order``-th derivative, O(dx**2)."""
    if order == 0:
        return sp.identity(npts, format="csr")
    if npts < order + 2:
        raise ValueError("need at least %d nodes for order %d" % (order + 2, order))
    return _unit_derivative_matrix(npts, order) * (1.0 / dx**order)


def boundary_row(npts, dx, order, side):
    """Dense row evaluating the ``order``-th derivative at an end node."""
    i = 0 if side == "left" else npts - 1
    row = np.zeros(npts)
    if order == 0:
        row[i] = 1.0
        return row
    idx = stencil_window(i, npts, order)
    row[idx] = fd_weights(idx - i, 0.0, order) / dx**order
    return row


def trapezoid_weights(npts, h):
    """Composite trapezoid weights for ``npts`` equispaced samples."""
    w = np.full(npts, float(h))
    w[0] = w[-1] = 0.5 * h
    return w
