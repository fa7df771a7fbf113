"""Overdetermination functionals.

``q(t) = int u_i(t, x) omega(x) dx`` and its derivative identity
``q' = r``: for a weight vanishing to order ``l`` at ``0`` and ``l - 1`` at
``R`` the derivative of ``q`` along a solution of the linear problem is an
explicit combination of boundary traces, weighted integrals of ``u``, and
the source terms. The control matrices ``psi_kj(t) = int h_j omega_k dx``
make the per-time source system square.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .exceptions import DegenerateOverdetermination
from .model import as_discrete
from .norms import TimeSeries


def _weight_values(omega, grid, d=0):
    if callable(omega):
        return np.asarray(omega(grid.x, d) if d else omega(grid.x), dtype=float)
    if d:
        raise ValueError("derivatives of a sampled weight array are not available")
    return np.asarray(omega, dtype=float)


def q_functional(traj, i, omega, grid=None):
    """``q(t) = int u_i(t, x) omega(x) dx`` by the trapezoid rule."""
    grid = grid or traj.grid
    u = traj.u if hasattr(traj, "u") else np.asarray(traj)
    w = _weight_values(omega, grid) * grid.wx
    return TimeSeries(u[:, i, :] @ w, grid.dt)


# ---------------------------------------------------------------------------
# the derivative identity


@dataclass
class RKernels:
    """Linear pieces of ``r(t; u_i, omega)`` on one grid.

    ``interior[m, c]`` is the kernel multiplying ``u_c`` (shape
    ``(T, n, Nx+2)``), ``mu_coef[m]`` (``(T, l, n)``) and ``nu_coef[m]``
    (``(T, l+1, n)``) multiply the traces, ``f_weight`` is ``omega`` and
    ``G_weights[j]`` is ``omega^(j)``. The leading axis ``T`` has length 1
    for time-independent coefficients.
    """

    i: int
    interior: np.ndarray
    mu_coef: np.ndarray
    nu_coef: np.ndarray
    f_weight: np.ndarray
    G_weights: np.ndarray

    def at(self, arr, m):
        return arr[0] if arr.shape[0] == 1 else arr[m]


def _leibniz(coef_derivs, w_derivs, j, p):
    """``(a omega^(j))^(p)`` from lists of derivatives of ``a`` and ``omega``."""
    return sum(comb(p, q) * coef_derivs[q] * w_derivs[j + p - q] for q in range(p + 1))


def r_kernels(spec, i, omega, grid):
    """Precompute the kernels of ``r(t; u_i, omega)`` for component ``i``."""
    l, n = spec.l, spec.n
    top = 2 * l + 1
    if getattr(omega, "max_order", np.inf) < top:
        raise ValueError(
            "weight provides derivatives up to order %s but %d are required" % (omega.max_order, top)
        )
    x = grid.x
    ends = np.array([0.0, grid.R])
    wd = [omega(x, d) for d in range(top + 1)]
    we = [omega(ends, d) for d in range(top + 1)]
    a, b = spec.a_top[i], spec.a_sub[i]
    times = grid.t if spec.time_dependent else np.array([0.0])
    T = len(times)
    N = grid.Nx + 2

    interior = np.zeros((T, n, N))
    mu_coef = np.zeros((T, l, n))
    nu_coef = np.zeros((T, l + 1, n))
    interior[:, i] += (-1) ** (l + 1) * (a * wd[top] - b * wd[2 * l])
    nu_coef[:, l, i] += a * we[l][1]
    for k in range(l):
        sign = (-1) ** (l + k)
        nu_coef[:, k, i] += sign * (a * we[2 * l - k][1] - b * we[2 * l - k - 1][1])
        mu_coef[:, k, i] -= sign * (a * we[2 * l - k][0] - b * we[2 * l - k - 1][0])

    for j in range(l):
        c_odd, c_even = spec.coefficient(2 * j + 1), spec.coefficient(2 * j)
        if c_odd is None and c_even is None:
            continue
        for s, t in enumerate(times):
            odd = _coef_derivs(c_odd, t, x, j + 1, n)
            even = _coef_derivs(c_even, t, x, j, n)
            odd_e = _coef_derivs(c_odd, t, ends, j + 1, n)
            even_e = _coef_derivs(c_even, t, ends, j, n)
            for m in range(n):
                kern = _leibniz([c[i, m] for c in odd], wd, j, j + 1) - _leibniz([c[i, m] for c in even], wd, j, j)
                interior[s, m] += (-1) ** (j + 1) * kern
                for k in range(j):
                    blk = _leibniz([c[i, m] for c in odd_e], we, j, j - k) - _leibniz(
                        [c[i, m] for c in even_e], we, j, j - k - 1
                    )
                    nu_coef[s, k, m] += (-1) ** (j + k) * blk[1]
                    mu_coef[s, k, m] -= (-1) ** (j + k) * blk[0]
    return RKernels(i, interior, mu_coef, nu_coef, wd[0], np.stack(wd[: l + 1]))


def _coef_derivs(coef, t, x, order, n):
    if coef is None:
        return [np.zeros((n, n, len(x)))] * (order + 1)
    return [coef.eval(t, x, d) for d in range(order + 1)]


def r_interior(kern, u_level, m, wx):
    """``r~`` at one time level: ``sum_c int u_c K_c dx``."""
    return float(np.sum((kern.at(kern.interior, m) * u_level) @ wx))


def r_boundary(kern, mu, nu, m):
    """Trace terms of ``r`` at level ``m``; ``mu`` is ``(l, n, Nt+1)``."""
    total = float(np.sum(kern.at(kern.nu_coef, m) * nu[:, :, m]))
    if mu.shape[0]:
        total += float(np.sum(kern.at(kern.mu_coef, m) * mu[:, :, m]))
    return total


def r_sources(kern, f, G, wx):
    """``int f_i omega + sum_j int G_ji omega^(j)`` for all levels."""
    i = kern.i
    out = 0.0
    if f is not None:
        out = out + f[:, i, :] @ (kern.f_weight * wx)
    if G is not None:
        for j in range(G.shape[0]):
            out = out + G[j, :, i, :] @ (kern.G_weights[j] * wx)
    return out


def r_functional(spec, traj, mu, nu, src, i, omega, grid=None, interior_only=False, kernels=None):
    """``r(t; u_i, omega)`` per time level; ``interior_only`` gives ``r~``."""
    grid = grid or traj.grid
    u = traj.u if hasattr(traj, "u") else np.asarray(traj)
    kern = kernels or r_kernels(spec, i, omega, grid)
    Nt1 = u.shape[0]
    wx = grid.wx
    if kern.interior.shape[0] == 1:
        r = np.einsum("mck,ck,k->m", u, kern.interior[0], wx)
    else:
        r = np.einsum("mck,mck,k->m", u, kern.interior, wx)
    if not interior_only:
        mu = np.asarray(mu, dtype=float).reshape(spec.l, spec.n, Nt1)
        nu = np.asarray(nu, dtype=float).reshape(spec.l + 1, spec.n, Nt1)
        r = r + np.array([r_boundary(kern, mu, nu, m) for m in range(Nt1)])
        if src is not None:
            r = r + r_sources(kern, src.f, src.G, wx)
    return TimeSeries(r, grid.dt)


def identity_residual(q, r):
    """``max_t |q(t) - q(0) - int_0^t r|`` with trapezoid time integration."""
    qv, rv, dt = q.values, r.values, q.dt
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (rv[1:] + rv[:-1]))])
    return float(np.max(np.abs(qv - qv[0] - integral)))


# ---------------------------------------------------------------------------
# control matrices


@dataclass
class PsiMatrix:
    """``psi[i]`` has shape ``(Nt+1, m_i, m_i)`` with ``psi[i][t, k, j] =
    int h_ji omega_ki dx``; ``delta[i]`` is its determinant series."""

    psi: dict
    delta: dict
    delta_min: float
    psi0: float
    thresholds: dict


def delta_threshold(psi0, m):
    return max(1e-12, 1e-6 * psi0**m)


def _det(mats):
    m = mats.shape[-1]
    if m == 1:
        return mats[:, 0, 0].copy()
    if m == 2:
        return mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    if m == 3:
        a = mats
        return (
            a[:, 0, 0] * (a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1])
            - a[:, 0, 1] * (a[:, 1, 0] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 0])
            + a[:, 0, 2] * (a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0])
        )
    return np.linalg.det(mats)  # LU with partial pivoting


def psi_matrix(data, grid, check=True):
    """Fill the control matrices and their determinants by quadrature.

    Raises :class:`DegenerateOverdetermination` when ``|Delta_i(t)|`` drops
    below ``max(1e-12, 1e-6 psi0**m_i)`` and ``check`` is set.
    """
    d = as_discrete(data, grid)
    psi, delta = {}, {}
    for i in d.controlled:
        W = np.stack([w(grid.x) * grid.wx for w in d.weights[i]])  # (m, Nx+2)
        psi[i] = np.einsum("jtx,kx->tkj", d.controls[i], W)
        delta[i] = _det(psi[i])
    psi0 = max((float(np.max(np.abs(p))) for p in psi.values()), default=0.0)
    thresholds = {i: delta_threshold(psi0, p.shape[-1]) for i, p in psi.items()}
    delta_min = min((float(np.min(np.abs(dl))) for dl in delta.values()), default=np.inf)
    out = PsiMatrix(psi, delta, delta_min, psi0, thresholds)
    if check:
        for i, dl in delta.items():
            bad = np.nonzero(np.abs(dl) < thresholds[i])[0]
            if bad.size:
                t = bad[0] * grid.dt
                raise DegenerateOverdetermination(
                    "overdetermination system degenerate at t = %g (component %d, |Delta| = %.3e < %.3e)"
                    % (t, i + 1, abs(dl[bad[0]]), thresholds[i]),
                    t=t,
                    delta=float(dl[bad[0]]),
                )
    return out


def cramer_source_step(psi_t, z_t, threshold=1e-12):
    """Solve ``sum_j F_j psi_kj = z_k`` by a pivoted solve.

    >>> cramer_source_step([[2.0, 1.0], [1.0, 1.0]], [3.0, 2.0])
    array([1., 1.])
    """
    psi_t = np.atleast_2d(np.asarray(psi_t, dtype=float))
    z_t = np.atleast_1d(np.asarray(z_t, dtype=float))
    det = np.linalg.det(psi_t)
    if not abs(det) >= threshold:
        raise DegenerateOverdetermination("determinant %.3e below threshold %.1e" % (det, threshold), delta=det)
    return np.linalg.solve(psi_t, z_t)


def cramer_quotients(psi_t, z_t):
    """Literal Cramer rule ``F_k = Delta_k / Delta`` (kept as a test oracle)."""
    psi_t = np.atleast_2d(np.asarray(psi_t, dtype=float))
    z_t = np.asarray(z_t, dtype=float)
    det = np.linalg.det(psi_t)
    out = np.empty(len(z_t))
    for k in range(len(z_t)):
        sub = psi_t.copy()
        sub[:, k] = z_t
        out[k] = np.linalg.det(sub) / det
    return out
