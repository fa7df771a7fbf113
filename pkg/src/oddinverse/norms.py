"""Discrete norms: L2 in space, the solution-space norm, L1(0,T; L2),
Gagliardo-type fractional norms of boundary traces and the exponentially
weighted L1 norm used to measure contraction of the source map.

All quadrature is composite trapezoid in ``t`` and ``x``.
"""

from dataclasses import dataclass

import numpy as np

from .stencils import derivative_matrix, trapezoid_weights

GAGLIARDO_MAX_SAMPLES = 4097


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    dt: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("a TimeSeries is one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("TimeSeries values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def t(self):
        return self.dt * np.arange(len(self.values))


@dataclass(frozen=True)
class XNormReport:
    sup_l2: float
    dxl_l2: float

    @property
    def total(self):
        return self.sup_l2 + self.dxl_l2


def _series(series, dt):
    if isinstance(series, TimeSeries):
        return series.values, series.dt
    if dt is None:
        raise TypeError("dt is required for a bare array")
    return np.asarray(series, dtype=float), float(dt)


def l2_norm(values, dx):
    """Trapezoid approximation of ``(int values**2 dx)**0.5`` along the last axis."""
    values = np.asarray(values, dtype=float)
    w = trapezoid_weights(values.shape[-1], dx)
    return np.sqrt(np.maximum((values**2) @ w, 0.0))


def l1_norm(series, dt=None):
    values, dt = _series(series, dt)
    return float(np.abs(values) @ trapezoid_weights(len(values), dt))


def weighted_l1(series, gamma, dt=None):
    """Trapezoid approximation of ``int_0^T exp(-gamma t) |series(t)| dt``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    values, dt = _series(series, dt)
    t = dt * np.arange(len(values))
    return float((np.exp(-gamma * t) * np.abs(values)) @ trapezoid_weights(len(values), dt))


def l1_l2_norm(field, dx, dt):
    """Norm of ``L1(0,T; L2)`` summed over components.

    ``field`` has shape ``(Nt+1, n, Nx+2)`` (or ``(Nt+1, Nx+2)`` for one component).
    """
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        field = field[:, None, :]
    per_time = l2_norm(field, dx)  # (Nt+1, n)
    return float(np.sum(trapezoid_weights(field.shape[0], dt) @ per_time))


def x_norm(u, dx, dt, l):
    """Norm of the solution space: sup-in-time L2 plus space-time L2 of the
    ``l``-th x-derivative, each summed over components.

    ``u`` has shape ``(Nt+1, n, Nx+2)``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, None, :]
    sup_l2 = float(np.sum(np.max(l2_norm(u, dx), axis=0)))
    D = derivative_matrix(u.shape[-1], dx, l)
    du = _apply(D, u)
    wx = trapezoid_weights(u.shape[-1], dx)
    wt = trapezoid_weights(u.shape[0], dt)
    sq = np.einsum("t,tcj,j->c", wt, du**2, wx)
    return XNormReport(sup_l2, float(np.sum(np.sqrt(np.maximum(sq, 0.0)))))


def _apply(D, u):
    flat = u.reshape(-1, u.shape[-1])
    return (D @ flat.T).T.reshape(u.shape)


def gagliardo_seminorm(series, s, dt=None):
    """Double-sum Gagliardo seminorm of order ``s`` (diagonal skipped).

    Long series are subsampled with a uniform stride so at most
    ``GAGLIARDO_MAX_SAMPLES`` points enter the O(N**2) sum.
    """
    values, dt = _series(series, dt)
    if len(values) > GAGLIARDO_MAX_SAMPLES:
        stride = int(np.ceil((len(values) - 1) / (GAGLIARDO_MAX_SAMPLES - 1)))
        values = values[::stride]
        dt = dt * stride
    n = len(values)
    w = trapezoid_weights(n, dt)
    total = 0.0
    chunk = 512
    idx = np.arange(n)
    for start in range(0, n, chunk):
        rows = idx[start:start + chunk]
        gap = np.abs(rows[:, None] - idx[None, :]) * dt
        with np.errstate(divide="ignore", invalid="ignore"):
            kernel = np.where(gap > 0, 1.0 / gap ** (1.0 + 2.0 * s), 0.0)
        diff2 = (values[rows, None] - values[None, :]) ** 2
        total += float(w[rows] @ (diff2 * kernel) @ w)
    return np.sqrt(total)


def frac_sobolev_norm(series, s, dt=None):
    """``(||f||_{L2(0,T)}**2 + [f]_s**2)**0.5``; ``s = 0`` gives the L2 norm."""
    if not 0.0 <= s < 1.0:
        raise ValueError("fractional order must lie in [0, 1), got %r" % s)
    values, dt = _series(series, dt)
    l2 = float(l2_norm(values, dt))
    if s == 0.0:
        return l2
    return float(np.hypot(l2, gagliardo_seminorm(values, s, dt)))


def trace_order(l, j):
    return (l - j) / (2 * l + 1)


def boundary_norm(mu, nu, l, dt):
    """Norm of the boundary traces, summed over derivative order and component.

    ``mu`` has shape ``(l, n, Nt+1)``, ``nu`` has shape ``(l+1, n, Nt+1)``.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.ndim == 2:
        mu = mu[:, None, :]
    if nu.ndim == 2:
        nu = nu[:, None, :]
    if mu.shape[0] != l or nu.shape[0] != l + 1:
        raise ValueError(
            "expected %d left and %d right traces, got %d and %d" % (l, l + 1, mu.shape[0], nu.shape[0])
        )
    total = 0.0
    for traces in (mu, nu):
        for j, block in enumerate(traces):
            s = trace_order(l, j)
            for comp in block:
                if np.any(comp):
                    total += frac_sobolev_norm(comp, s, dt)
    return total
