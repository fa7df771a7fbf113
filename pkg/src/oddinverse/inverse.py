"""Recovery of the source amplitudes ``F_ki(t)`` from integral data.

The linear problem is solved either by time marching (default) or by the
fixed-point iteration ``F <- A F`` on whole trajectories; both realise the
same discrete equations

    psi(t_m) F(t_m) = phi'(t_m) - r~(u(t_m)) - (trace, h0 and G terms),

with ``u`` the theta-scheme solution driven by ``h0 + sum F_k h_k``. The
nonlinear problem wraps the linear one in an outer Picard loop that freezes
the nonlinearity at the previous trajectory.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import norms
from .exceptions import CompatibilityError, ContractionFailure, SolverError, ValidationRefused
from .forward import (
    SourceBundle,
    ThetaStepper,
    Trajectory,
    eval_nonlinearity,
    solve_linear_forward,
)
from .functionals import psi_matrix, q_functional, r_boundary, r_kernels, r_sources
from .model import as_discrete, check_compatibility, compute_c0, validate_exponents, validate_system

logger = logging.getLogger(__name__)

GAMMA_MAX_FACTOR = 1e4


def assemble_source(h0, controls, F):
    """``f_i = h0_i + sum_k F_ki h_ki`` with ``h0`` of shape ``(Nt+1, n, Nx+2)``.

    ``controls[i]`` has shape ``(m_i, Nt+1, Nx+2)`` and ``F[i]`` shape
    ``(m_i, Nt+1)``; components without controls keep ``f_i = h0_i``.
    """
    f = np.array(h0, dtype=float, copy=True)
    for i, H in controls.items():
        if F is None or i not in F:
            continue
        f[:, i, :] += np.einsum("kt,ktx->tx", np.asarray(F[i], dtype=float), H)
    return f


@dataclass
class ReconstructionResult:
    """Recovered amplitudes with the trajectory they drive.

    ``F[i]`` has shape ``(m_i, Nt+1)``; ``residual_phi[(k, i)]`` is
    ``max_t |q(t; u_i, omega_ki) - phi_ki(t)|``.
    """

    F: dict
    trajectory: Trajectory
    residual_phi: dict
    delta_min: float
    gamma_used: float = float("nan")
    outer_ratios: list = field(default_factory=list)
    inner_iters: int = 0
    c0: float = 0.0
    method: str = "march"
    sweep_ratios: list = field(default_factory=list)
    converged: bool = True

    def series(self, i, k):
        return norms.TimeSeries(self.F[i][k], self.trajectory.grid.dt)

    def pairs(self):
        return [(i, k) for i in sorted(self.F) for k in range(len(self.F[i]))]


def f_l1_distance(F1, F2, dt):
    """Sum over all amplitudes of ``||F1 - F2||_L1``."""
    return sum(norms.l1_norm(a - b, dt) for i in F1 for a, b in zip(F1[i], F2[i]))


class _InverseSetup:
    """Per-run precomputation shared by both linear realisations."""

    def __init__(self, spec, d, grid, G, stepper=None):
        self.spec, self.d, self.grid, self.G = spec, d, grid, G
        self.stepper = stepper or ThetaStepper(spec, grid)
        self.pairs = [(i, k) for i in d.controlled for k in range(d.m(i))]
        self.index = {p: s for s, p in enumerate(self.pairs)}
        self.psi = psi_matrix(d, grid)
        self.kernels = {(i, k): r_kernels(spec, i, d.weights[i][k], grid) for i, k in self.pairs}
        wx = grid.wx
        Nt1 = grid.Nt + 1
        # everything in the right-hand side that does not depend on u or F
        self.z_known = np.empty((Nt1, len(self.pairs)))
        for s, (i, k) in enumerate(self.pairs):
            kern = self.kernels[(i, k)]
            bnd = np.array([r_boundary(kern, d.mu, d.nu, m) for m in range(Nt1)])
            src = r_sources(kern, d.h0, G, wx)
            self.z_known[:, s] = d.dphi[i][k] - bnd - src
        self.blocks = np.zeros((Nt1, len(self.pairs), len(self.pairs)))
        for i in d.controlled:
            idx = [self.index[(i, k)] for k in range(d.m(i))]
            self.blocks[np.ix_(range(Nt1), idx, idx)] = self.psi.psi[i]

    def r_tilde(self, u_level, m):
        wx = self.grid.wx
        return np.array([np.sum((kern.at(kern.interior, m) * u_level) @ wx) for kern in self.kernels.values()])

    def r_tilde_all(self, u):
        out = np.empty((u.shape[0], len(self.pairs)))
        for s, kern in enumerate(self.kernels.values()):
            if kern.interior.shape[0] == 1:
                out[:, s] = np.einsum("mck,ck,k->m", u, kern.interior[0], self.grid.wx)
            else:
                out[:, s] = np.einsum("mck,mck,k->m", u, kern.interior, self.grid.wx)
        return out

    def to_dict(self, flat):
        out = {i: np.zeros((self.d.m(i), flat.shape[0])) for i in self.d.controlled}
        for s, (i, k) in enumerate(self.pairs):
            out[i][k] = flat[:, s]
        return out

    def base_source(self):
        return SourceBundle(self.d.h0, self.G)

    def source_with(self, F):
        return SourceBundle(assemble_source(self.d.h0, self.d.controls, F), self.G)


def _residual_phi(traj, d, grid):
    out = {}
    for i in d.controlled:
        for k, w in enumerate(d.weights[i]):
            q = q_functional(traj, i, w, grid).values
            out[(k, i)] = float(np.max(np.abs(q - d.phi[i][k])))
    return out


def _zero_result(spec, d, grid, method, delta_min=np.inf):
    n, N, Nt = spec.n, grid.Nx + 2, grid.Nt
    F = {i: np.zeros((d.m(i), Nt + 1)) for i in d.controlled}
    traj = Trajectory(np.zeros((Nt + 1, n, N)), grid, spec.l)
    res = {(k, i): 0.0 for i in d.controlled for k in range(d.m(i))}
    return ReconstructionResult(F, traj, res, delta_min, method=method)


def check_inverse_admissible(spec, d, grid, tol_compat=None):
    """Structural checks required before an inverse solve."""
    report = validate_system(spec, grid=grid)
    if not report.ok:
        raise ValidationRefused("; ".join(report.violations), report)
    grid.check_stencil(spec.l)
    if d.M == 0:
        raise ValidationRefused("no unknown amplitudes: every m_i is zero")
    from .model import validate_weight

    for i in d.controlled:
        for k, w in enumerate(d.weights[i]):
            wr = validate_weight(w, spec.l, R=grid.R)
            if not wr.ok:
                raise ValidationRefused(
                    "weight omega_%d%d: %s" % (k + 1, i + 1, "; ".join(wr.violations)), wr
                )
    res = check_compatibility(d, grid)
    for i, r in res.items():
        tol = default_tol_compat(d, grid, i) if tol_compat is None else tol_compat
        if np.any(r > tol):
            k = int(np.argmax(r))
            raise CompatibilityError(
                "compatibility violated for omega_%d%d: |phi(0) - int u0 omega| = %.3e > %.1e"
                % (k + 1, i + 1, r[k], tol),
                residuals=res,
            )


def default_tol_compat(d, grid, i):
    """``1e-6 (1 + max|phi|)`` plus a quadrature allowance of ``10 dx**2 (1 + max|phi|)``."""
    scale = 1.0 + float(np.max(np.abs(d.phi[i])))
    return (1e-6 + 10.0 * grid.dx**2) * scale


def default_tol_overdet(d):
    scale = 1.0 + max((float(np.max(np.abs(p))) for p in d.phi.values()), default=0.0)
    return 1e-6 * scale


def solve_linear_inverse(
    spec,
    data,
    grid,
    src_G=None,
    method="march",
    gamma0=None,
    tol_inner=1e-11,
    max_sweeps=1000,
    tol_compat=None,
    validate=True,
    stepper=None,
    initial_F=None,
):
    """Recover ``F`` for the linear problem with optional frozen ``G`` fields.

    ``src_G`` has shape ``(l+1, Nt+1, n, Nx+2)``. ``method`` is ``"march"``
    or ``"picard"``; the latter iterates ``F <- A F`` from ``initial_F``
    (zero by default) and stops when the L1 change is below
    ``tol_inner * (1 + ||F||_L1)``.
    """
    if method not in ("march", "picard"):
        raise ValueError("method must be 'march' or 'picard'")
    d = as_discrete(data, grid)
    if validate:
        check_inverse_admissible(spec, d, grid, tol_compat)
    setup = _InverseSetup(spec, d, grid, src_G, stepper)
    c0 = compute_c0(d, grid, "inverse")
    if c0 == 0.0 and (src_G is None or not np.any(src_G)):
        out = _zero_result(spec, d, grid, method, setup.psi.delta_min)
        out.gamma_used = np.log(10.0) / grid.T if method == "picard" else float("nan")
        return out
    if method == "march":
        F, traj = _march(setup)
        result = ReconstructionResult(F, traj, _residual_phi(traj, d, grid), setup.psi.delta_min, method="march")
    else:
        result = _picard(setup, gamma0, tol_inner, max_sweeps, initial_F)
    result.c0 = c0
    return result


def _march(setup):
    spec, d, grid, st = setup.spec, setup.d, setup.grid, setup.stepper
    n, N, Nt, M = spec.n, grid.Nx + 2, grid.Nt, len(setup.pairs)
    u = np.empty((Nt + 1, n, N))
    u[0] = d.u0
    flat = u.reshape(Nt + 1, -1)
    Fs = np.zeros((Nt + 1, M))
    Fs[0] = np.linalg.solve(setup.blocks[0], setup.z_known[0] - setup.r_tilde(u[0], 0))
    lift = st.prepare(d.mu, d.nu)
    base = setup.base_source()
    static = not spec.time_dependent and all(
        np.allclose(H, H[:, :1]) for H in d.controls.values()
    )
    loads_cache = None

    def loads(m):
        out = np.zeros((M, n * N))
        for s, (i, k) in enumerate(setup.pairs):
            out[s, i * N:(i + 1) * N] = d.controls[i][k, m]
        return out

    def responses(m):
        L = loads(m)
        B = np.stack([st.response(L[s], m) for s in range(M)])
        return B, np.stack([setup.r_tilde(b.reshape(n, N), m) for b in B], axis=1)

    def level_source(m, F):
        s = st.source_level(base, m)
        return s + F @ loads(m)

    s_prev = level_source(0, Fs[0])
    for m in range(Nt):
        s_next0 = st.source_level(base, m + 1)
        v = st.step(flat[m], m, s_prev, s_next0, lift)
        if static:
            if loads_cache is None:
                loads_cache = responses(m + 1)
            B, RB = loads_cache
        else:
            B, RB = responses(m + 1)
        A = setup.blocks[m + 1] + RB
        rhs = setup.z_known[m + 1] - setup.r_tilde(v.reshape(n, N), m + 1)
        try:
            Fm = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError("source system singular at time step %d" % (m + 1), step=m + 1) from exc
        Fs[m + 1] = Fm
        flat[m + 1] = v + Fm @ B
        s_prev = s_next0 + Fm @ loads(m + 1)
    return setup.to_dict(Fs), Trajectory(u, grid, spec.l)


def apply_A(setup, F_flat):
    """One sweep of ``F <- A F``: forward solve, then per-time Cramer step."""
    d, grid = setup.d, setup.grid
    traj = solve_linear_forward(
        setup.spec, d.u0, d.mu, d.nu, setup.source_with(setup.to_dict(F_flat)), grid, stepper=setup.stepper
    )
    rt = setup.r_tilde_all(traj.u)
    new = np.linalg.solve(setup.blocks, (setup.z_known - rt)[..., None])[..., 0]
    return new, traj


def _significant(delta, F, floor):
    """Zero the entries of a sweep difference that sit at round-off level."""
    return np.where(np.abs(delta) > floor * (1.0 + np.abs(F)), delta, 0.0)


def _picard(setup, gamma0, tol, max_sweeps, initial_F, floor=1e-12):
    grid = setup.grid
    T, dt = grid.T, grid.dt
    gamma = np.log(10.0) / T if gamma0 is None else float(gamma0)
    gamma_max = GAMMA_MAX_FACTOR / T
    M = len(setup.pairs)
    F = np.zeros((grid.Nt + 1, M)) if initial_F is None else _flatten(setup, initial_F)
    diffs = []  # significant part of each sweep difference

    def wnorm(series, g):
        return sum(norms.weighted_l1(series[:, s], g, dt) for s in range(M))

    for sweep in range(1, max_sweeps + 1):
        F_new, _ = apply_A(setup, F)
        delta = F_new - F
        F = F_new
        diffs.append(_significant(delta, F, floor))
        if len(diffs) >= 2 and np.any(diffs[-1]) and np.any(diffs[-2]):
            while True:
                prev = wnorm(diffs[-2], gamma)
                ratio = wnorm(diffs[-1], gamma) / prev if prev > 0 else 0.0
                if ratio < 0.5 or gamma >= gamma_max:
                    break
                gamma = min(2.0 * gamma, gamma_max)
            if ratio >= 1.0:
                raise ContractionFailure(
                    "A is not contracting at gamma_max = %.3g (ratio %.3f)" % (gamma, ratio),
                    ratios=[ratio],
                )
        change = sum(norms.l1_norm(delta[:, s], dt) for s in range(M))
        size = sum(norms.l1_norm(F[:, s], dt) for s in range(M))
        if not np.isfinite(change):
            raise SolverError("non-finite amplitude iterate at sweep %d" % sweep)
        if change <= tol * (1.0 + size):
            break
    else:
        raise ContractionFailure(
            "F <- A F did not converge in %d sweeps (last L1 change %.3e)" % (max_sweeps, change)
        )
    traj = solve_linear_forward(
        setup.spec, setup.d.u0, setup.d.mu, setup.d.nu, setup.source_with(setup.to_dict(F)), grid, stepper=setup.stepper
    )
    norms_g = [g for g in (wnorm(dl, gamma) for dl in diffs) if g > 0]
    ratios = [b / a for a, b in zip(norms_g[:-1], norms_g[1:])]
    return ReconstructionResult(
        setup.to_dict(F),
        traj,
        _residual_phi(traj, setup.d, grid),
        setup.psi.delta_min,
        gamma_used=gamma,
        inner_iters=sweep,
        method="picard",
        sweep_ratios=ratios,
    )


def _flatten(setup, F):
    if isinstance(F, dict):
        return np.stack([F[i][k] for i, k in setup.pairs], axis=1)
    return np.asarray(F, dtype=float)


def solve_nonlinear_inverse(
    spec,
    data,
    grid,
    tol_outer=1e-8,
    max_outer=50,
    initial="zero",
    method="march",
    tol_compat=None,
    mode="nonstrict",
    **inner,
):
    """Outer Picard loop: freeze ``G_j = -g_j(v)`` and solve the linear inverse problem.

    ``initial`` is ``"zero"``, ``"linear"`` (the forward solution with
    ``F = 0`` and no nonlinearity) or a :class:`Trajectory`. Iteration stops
    when both the X-norm change of ``u`` and the L1 change of ``F`` fall
    below ``tol_outer``.
    """
    d = as_discrete(data, grid)
    report = validate_system(spec, grid=grid)
    report.extend(validate_exponents(spec, mode))
    if not report.ok:
        raise ValidationRefused("; ".join(report.violations), report)
    if spec.nonlinearity is None or spec.nonlinearity.is_zero:
        return solve_linear_inverse(spec, d, grid, method=method, tol_compat=tol_compat, **inner)
    check_inverse_admissible(spec, d, grid, tol_compat)
    c0 = compute_c0(d, grid, "inverse")
    linear = spec.linear()
    stepper = ThetaStepper(linear, grid)
    if c0 == 0.0:
        out = _zero_result(spec, d, grid, method)
        out.delta_min = psi_matrix(d, grid).delta_min
        return out

    if isinstance(initial, Trajectory):
        v = initial
    elif initial == "zero":
        v = Trajectory(np.zeros((grid.Nt + 1, spec.n, grid.Nx + 2)), grid, spec.l)
    elif initial == "linear":
        v = solve_linear_forward(linear, d.u0, d.mu, d.nu, SourceBundle(d.h0, None), grid, stepper=stepper)
    else:
        raise ValueError("initial must be 'zero', 'linear' or a Trajectory")

    ratios, prev_diff, F_prev = [], None, None
    inner_total = 0
    for sweep in range(1, max_outer + 1):
        G = -eval_nonlinearity(spec, v, grid).G
        res = solve_linear_inverse(
            linear, d, grid, src_G=G, method=method, validate=False, stepper=stepper, **inner
        )
        inner_total += max(res.inner_iters, 1)
        diff = (res.trajectory - v).x_norm().total
        dF = np.inf if F_prev is None else f_l1_distance(res.F, F_prev, grid.dt)
        if not np.isfinite(diff):
            raise ContractionFailure(
                "smallness regime violated: non-finite outer iterate (c0 = %.3e)" % c0, c0=c0, ratios=ratios
            )
        if prev_diff is not None:
            ratios.append(diff / prev_diff if prev_diff > 0 else 0.0)
        logger.debug("outer sweep %d: |du|_X = %.3e, |dF|_L1 = %.3e", sweep, diff, dF)
        v, prev_diff, F_prev = res.trajectory, diff, res.F
        if diff < tol_outer and dF < tol_outer:
            res.outer_ratios = ratios
            res.inner_iters = inner_total
            res.c0 = c0
            return res
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            break
    raise ContractionFailure(
        "smallness regime violated: outer iteration did not contract (c0 = %.3e, ratios %s)"
        % (c0, ", ".join("%.3g" % r for r in ratios[-5:])),
        c0=c0,
        ratios=ratios,
    )


def stability_probe(spec, data, grid, delta_dphi, baseline=None, **kwargs):
    """Empirical Lipschitz ratio ``(||dF||_L1 + ||du||_X) / ||d phi'||_L1``.

    ``delta_dphi[i]`` has shape ``(m_i, Nt+1)``. A zero perturbation gives 0.
    """
    d = as_discrete(data, grid)
    size = sum(norms.l1_norm(s, grid.dt) for i in delta_dphi for s in np.atleast_2d(delta_dphi[i]))
    if size == 0.0:
        return 0.0
    solve = solve_linear_inverse if spec.nonlinearity is None or spec.nonlinearity.is_zero else solve_nonlinear_inverse
    base = baseline or solve(spec, d, grid, **kwargs)
    dphi = {i: d.dphi[i] + np.atleast_2d(delta_dphi.get(i, 0.0)) for i in d.dphi}
    # only phi' is perturbed; compatibility of phi(0) is unaffected
    pert = solve(spec, replace(d, dphi=dphi), grid, **kwargs)
    dF = f_l1_distance(pert.F, base.F, grid.dt)
    du = (pert.trajectory - base.trajectory).x_norm().total
    return (dF + du) / size
