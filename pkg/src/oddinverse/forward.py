"""Finite-difference solver for the linear and quasilinear direct problems.

Unknowns live on all ``Nx + 2`` nodes of each component, flattened
component-major. The ``2l + 1`` boundary conditions replace the equation
rows of the ``l`` leftmost and ``l + 1`` rightmost nodes; all other rows
carry the semi-discrete equation ``u_t = L u + s`` advanced by the
theta-scheme (Crank-Nicolson for ``theta = 1/2``).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import norms
from .exceptions import ContractionFailure, NonFiniteValue, SolverError, ValidationRefused
from .model import as_discrete, compute_c0, validate_exponents, validate_system
from .stencils import boundary_row, derivative_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """Discrete solution ``u[m, i, k]`` at time level ``m``, component ``i``, node ``k``."""

    u: np.ndarray
    grid: object
    l: int

    @property
    def n(self):
        return self.u.shape[1]

    def x_norm(self):
        return norms.x_norm(self.u, self.grid.dx, self.grid.dt, self.l)

    def __sub__(self, other):
        return Trajectory(self.u - other.u, self.grid, self.l)

    def __add__(self, other):
        return Trajectory(self.u + other.u, self.grid, self.l)


@dataclass(frozen=True)
class SourceBundle:
    """Right-hand side ``f + sum_j (-1)**j d^j G_j`` of the linear problem.

    ``f`` has shape ``(Nt+1, n, Nx+2)``; ``G`` has shape
    ``(l+1, Nt+1, n, Nx+2)``. Either may be ``None`` (zero).
    """

    f: object = None
    G: object = None

    def __add__(self, other):
        return SourceBundle(_add(self.f, other.f), _add(self.G, other.G))

    def scaled(self, c):
        return SourceBundle(None if self.f is None else c * self.f, None if self.G is None else c * self.G)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


@dataclass
class LinearOperator:
    """Semi-discrete operator at time ``t``: ``u_t = L u + s`` on equation
    rows, ``B u = b`` on the boundary rows flagged false in ``pde_rows``."""

    L: sp.csr_matrix
    B: sp.csr_matrix
    pde_rows: np.ndarray
    t: float

    def system_matrix(self, dt, theta=0.5):
        P = sp.diags(self.pde_rows.astype(float))
        eye = sp.identity(self.L.shape[0], format="csr")
        return (P @ (eye - theta * dt * self.L) + self.B).tocsc()


def boundary_layout(l, N):
    """``(node, side, order)`` for each boundary row of one component."""
    rows = [(j, "left", j) for j in range(l)]
    rows += [(N - 1 - j, "right", j) for j in range(l + 1)]
    return rows


def assemble_linear_operator(spec, grid, t):
    grid.check_stencil(spec.l)
    l, n, N, dx = spec.l, spec.n, grid.Nx + 2, grid.dx
    D = [derivative_matrix(N, dx, p) for p in range(2 * l + 2)]
    x = grid.x
    blocks = [[None] * n for _ in range(n)]
    for i in range(n):
        blocks[i][i] = (-1) ** l * (spec.a_top[i] * D[2 * l + 1] + spec.a_sub[i] * D[2 * l])
    for j in range(l):
        sign = (-1) ** j
        for idx, inner in ((2 * j + 1, D[j + 1]), (2 * j, D[j])):
            coef = spec.coefficient(idx)
            if coef is None:
                continue
            a = coef.eval(t, x)
            for i in range(n):
                for m in range(n):
                    if not np.any(a[i, m]):
                        continue
                    term = sign * (D[j] @ sp.diags(a[i, m]) @ inner)
                    blocks[i][m] = term if blocks[i][m] is None else blocks[i][m] + term
    for i in range(n):
        for m in range(n):
            if blocks[i][m] is None:
                blocks[i][m] = sp.csr_matrix((N, N))
    L = sp.bmat(blocks, format="csr")

    pde = np.ones(n * N, dtype=bool)
    rows, cols, vals = [], [], []
    for i in range(n):
        for node, side, order in boundary_layout(l, N):
            r = i * N + node
            pde[r] = False
            row = boundary_row(N, dx, order, side)
            nz = np.nonzero(row)[0]
            rows.extend([r] * len(nz))
            cols.extend(i * N + nz)
            vals.extend(row[nz])
    B = sp.csr_matrix((vals, (rows, cols)), shape=(n * N, n * N))
    return LinearOperator(L, B, pde, t)


def boundary_values(mu, nu, l, N, m):
    """Vector with the boundary data of time level ``m`` on the boundary rows."""
    n = nu.shape[1]
    b = np.zeros(n * N)
    for i in range(n):
        for node, side, order in boundary_layout(l, N):
            src = mu if side == "left" else nu
            b[i * N + node] = src[order, i, m]
    return b


def lift_boundary(mu, nu, grid, l):
    """Polynomial in ``x`` of degree ``2l - 1`` matching ``d^j u(t,0) = mu_j``
    and ``d^j u(t,R) = nu_j`` for ``j < l``.

    Returns an array of shape ``(Nt+1, n, Nx+2)``; ``nu_l`` is left to the
    boundary row of the operator.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    R = grid.R
    deg = 2 * l
    # rows: conditions, columns: coefficients of (x/R)**k
    A = np.zeros((deg, deg))
    for j in range(l):
        for k in range(deg):
            if k >= j:
                fall = np.prod(np.arange(k - j + 1, k + 1)) / R**j
                A[j, k] = fall * (1.0 if k == j else 0.0)
                A[l + j, k] = fall
    rhs = np.concatenate([mu[:l], nu[:l]], axis=0)  # (2l, n, Nt+1)
    coeffs = np.linalg.solve(A, rhs.reshape(deg, -1)).reshape(rhs.shape)
    powers = np.stack([(grid.x / R) ** k for k in range(deg)])  # (2l, Nx+2)
    return np.einsum("knm,kx->mnx", coeffs, powers)


class ThetaStepper:
    """Factorised theta-scheme for one system on one grid.

    Operators and LU factors are cached per time level (a single entry when
    the coefficients do not depend on ``t``).
    """

    def __init__(self, spec, grid, theta=0.5):
        grid.check_stencil(spec.l)
        self.spec, self.grid, self.theta = spec, grid, theta
        self.N = grid.Nx + 2
        self.size = spec.n * self.N
        self._ops, self._lus = {}, {}
        self._D = [derivative_matrix(self.N, grid.dx, p) for p in range(spec.l + 1)]

    def _key(self, m):
        return m if self.spec.time_dependent else 0

    def operator(self, m):
        key = self._key(m)
        if key not in self._ops:
            self._ops[key] = assemble_linear_operator(self.spec, self.grid, m * self.grid.dt)
        return self._ops[key]

    def factor(self, m):
        key = self._key(m)
        if key not in self._lus:
            A = self.operator(m).system_matrix(self.grid.dt, self.theta)
            try:
                self._lus[key] = spla.splu(A)
            except RuntimeError as exc:
                raise SolverError("singular boundary closure at time step %d: %s" % (m, exc), step=m) from exc
        return self._lus[key]

    def source_level(self, src, m):
        """Flat source ``f + sum (-1)**j D_j G_j`` at level ``m``."""
        n, N = self.spec.n, self.N
        s = np.zeros((n, N))
        if src is None:
            return s.ravel()
        if src.f is not None:
            s += src.f[m]
        if src.G is not None:
            for j in range(src.G.shape[0]):
                Gj = src.G[j, m]
                if np.any(Gj):
                    s += (-1) ** j * (self._D[j] @ Gj.T).T
        return s.ravel()

    def prepare(self, mu, nu):
        """Precompute the boundary lift and its operator images."""
        l, N, Nt = self.spec.l, self.N, self.grid.Nt
        psi = lift_boundary(mu, nu, self.grid, l).reshape(Nt + 1, -1)
        if self.spec.time_dependent:
            Lpsi = np.stack([self.operator(m).L @ psi[m] for m in range(Nt + 1)])
            Bpsi = np.stack([self.operator(m).B @ psi[m] for m in range(Nt + 1)])
        else:
            op = self.operator(0)
            Lpsi = (op.L @ psi.T).T
            Bpsi = (op.B @ psi.T).T
        bc = np.stack([boundary_values(mu, nu, l, N, m) for m in range(Nt + 1)]) - Bpsi
        return _Lift(psi, Lpsi, bc)

    def step(self, u_m, m, s_m, s_m1, lift):
        """Advance the flat state ``u_m`` from level ``m`` to ``m + 1``."""
        dt, th = self.grid.dt, self.theta
        op, op1 = self.operator(m), self.operator(m + 1)
        P = op1.pde_rows
        v = u_m - lift.psi[m]
        rhs = v + (1 - th) * dt * (op.L @ v)
        rhs += dt * ((1 - th) * (s_m + lift.Lpsi[m]) + th * (s_m1 + lift.Lpsi[m + 1]))
        rhs -= lift.psi[m + 1] - lift.psi[m]
        rhs = np.where(P, rhs, lift.bc[m + 1])
        v1 = self.factor(m + 1).solve(rhs)
        if not np.all(np.isfinite(v1)):
            raise SolverError("non-finite state after time step %d" % (m + 1), step=m + 1)
        return v1 + lift.psi[m + 1]

    def response(self, load, m1):
        """State at level ``m1`` produced by ``load`` entering the new level
        only (zero old state, homogeneous boundary rows)."""
        P = self.operator(m1).pde_rows
        rhs = np.where(P, self.theta * self.grid.dt * load, 0.0)
        return self.factor(m1).solve(rhs)

    def derivatives(self, u_level, orders):
        """``[D_k u]`` for ``k`` in ``orders``; ``u_level`` has shape ``(n, N)``."""
        return np.stack([(self._D[k] @ u_level.T).T for k in orders])


@dataclass
class _Lift:
    psi: np.ndarray
    Lpsi: np.ndarray
    bc: np.ndarray


def solve_linear_forward(spec, u0, mu, nu, src, grid, theta=0.5, stepper=None):
    """Solve the linear problem for sampled data.

    ``u0`` has shape ``(n, Nx+2)``, ``mu`` ``(l, n, Nt+1)``, ``nu``
    ``(l+1, n, Nt+1)``; ``src`` is a :class:`SourceBundle` or ``None``.
    """
    stepper = stepper or ThetaStepper(spec, grid, theta)
    n, N, Nt = spec.n, grid.Nx + 2, grid.Nt
    u = np.empty((Nt + 1, n, N))
    u[0] = u0
    if not (np.any(u0) or np.any(mu) or np.any(nu) or _has_source(src)):
        u[1:] = 0.0
        return Trajectory(u, grid, spec.l)
    lift = stepper.prepare(mu, nu)
    flat = u.reshape(Nt + 1, -1)
    s_prev = stepper.source_level(src, 0)
    for m in range(Nt):
        s_next = stepper.source_level(src, m + 1)
        flat[m + 1] = stepper.step(flat[m], m, s_prev, s_next, lift)
        s_prev = s_next
    return Trajectory(u, grid, spec.l)


def _has_source(src):
    return src is not None and (
        (src.f is not None and np.any(src.f)) or (src.G is not None and np.any(src.G))
    )


def eval_nonlinearity(spec, traj, grid=None, times=None):
    """Values ``g_j(t, x, u, ..., d^{l-1} u)`` for every time level.

    Returns a :class:`SourceBundle` whose ``G[j]`` holds ``g_j`` itself
    (the solver enters them with a minus sign). Derivatives use the
    solver's stencils. ``times`` defaults to ``m * dt`` for row ``m``.
    """
    u = traj.u if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    grid = grid or traj.grid
    l, n = spec.l, spec.n
    nl = spec.nonlinearity
    K, N = u.shape[0], u.shape[-1]
    G = np.zeros((l + 1, K, n, N))
    if nl is None or nl.is_zero:
        return SourceBundle(None, G)
    times = grid.dt * np.arange(K) if times is None else np.asarray(times, dtype=float).reshape(K)
    flat = u.reshape(-1, N)
    # y[k, i, m, :] is the k-th derivative of component i at row m
    y = np.stack([(derivative_matrix(N, grid.dx, k) @ flat.T).T.reshape(K, n, N).transpose(1, 0, 2) for k in range(l)])
    tt, xx = times[:, None], grid.x[None, :]
    for j in nl.terms:
        try:
            vals = np.broadcast_to(nl.evaluate(j, tt, xx, y), (n, K, N)).transpose(1, 0, 2)
        except (ValueError, TypeError):
            # evaluator not vectorised over time levels
            vals = np.stack([nl.evaluate(j, times[m], grid.x, y[:, :, m]) for m in range(K)])
        if not np.all(np.isfinite(vals)):
            m, c, k = np.argwhere(~np.isfinite(vals))[0]
            raise NonFiniteValue(
                "g_%d not finite at t=%g, component %d, x=%g" % (j, times[m], c + 1, grid.x[k]),
                step=int(m),
            )
        G[j] = vals
    return SourceBundle(None, G)


def energy_series(traj):
    """``int u_i**2 (1 + x) dx`` per time level and component, shape ``(Nt+1, n)``."""
    g = traj.grid
    rho = 1.0 + g.x
    return (traj.u**2 * rho) @ g.wx


def dissipation_series(traj, spec):
    """Per-step ``dt * int ((2l+1) a_top - 2 a_sub rho) (d^l u)**2 dx`` at
    the half step, shape ``(Nt, n)``; the weighted energy should drop by at
    least about this much each step for the homogeneous linear problem."""
    g = traj.grid
    l = traj.l
    D = derivative_matrix(g.Nx + 2, g.dx, l)
    mid = 0.5 * (traj.u[1:] + traj.u[:-1])
    dl = np.einsum("kj,mnj->mnk", D.toarray(), mid)
    rho = 1.0 + g.x
    weight = np.array([(2 * l + 1) * a - 2 * b * rho for a, b in zip(spec.a_top, spec.a_sub)])
    return g.dt * np.einsum("mnk,nk,k->mn", dl**2, weight, g.wx)


@dataclass
class PicardDiagnostics:
    ratios: list = field(default_factory=list)
    differences: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    c0: float = 0.0
    mode: str = "global"


def _nonlinear_source(spec, traj, grid):
    return eval_nonlinearity(spec, traj, grid).scaled(-1.0)


def check_direct_admissible(spec, grid):
    report = validate_system(spec, grid=grid)
    report.extend(validate_exponents(spec, "nonstrict"))
    if not report.ok:
        raise ValidationRefused("; ".join(report.violations), report)
    grid.check_stencil(spec.l)


def solve_nonlinear_forward(spec, data, grid, tol_picard=1e-10, max_iter=50, mode="global", initial=None, theta=0.5):
    """Picard iteration for the quasilinear direct problem.

    ``mode="global"`` iterates the whole-horizon map: each sweep solves the
    linear problem with the nonlinearity frozen at the previous iterate.
    ``mode="per_step"`` converges the same discrete equations one time step
    at a time. ``initial`` optionally replaces the linear-solve starting
    iterate (global mode).
    """
    from .inverse import assemble_source

    if mode not in ("global", "per_step"):
        raise ValueError("mode must be 'global' or 'per_step'")
    check_direct_admissible(spec, grid)
    d = as_discrete(data, grid)
    c0 = compute_c0(d, grid, "direct")
    diag = PicardDiagnostics(c0=c0, mode=mode)
    n, N, Nt = spec.n, grid.Nx + 2, grid.Nt
    if c0 == 0.0:
        diag.converged = True
        diag.iterations = 1
        return Trajectory(np.zeros((Nt + 1, n, N)), grid, spec.l), diag

    f = assemble_source(d.h0, d.controls, d.known_F or {})
    base = SourceBundle(f, None)
    stepper = ThetaStepper(spec, grid, theta)
    if spec.nonlinearity is None or spec.nonlinearity.is_zero:
        diag.converged, diag.iterations = True, 1
        return solve_linear_forward(spec, d.u0, d.mu, d.nu, base, grid, stepper=stepper), diag
    if mode == "per_step":
        return _per_step(spec, d, grid, base, stepper, tol_picard, max_iter, diag)

    if initial is None:
        u = solve_linear_forward(spec, d.u0, d.mu, d.nu, base, grid, stepper=stepper)
    else:
        u = initial if isinstance(initial, Trajectory) else Trajectory(np.asarray(initial), grid, spec.l)
    prev_diff = None
    for sweep in range(1, max_iter + 1):
        src = base + _nonlinear_source(spec, u, grid)
        u_new = solve_linear_forward(spec, d.u0, d.mu, d.nu, src, grid, stepper=stepper)
        with np.errstate(over="ignore", invalid="ignore"):
            diff = (u_new - u).x_norm().total
        if not np.isfinite(diff):
            raise ContractionFailure(
                "contraction failure; data likely violates smallness regime (non-finite iterate)",
                c0=c0,
                ratios=diag.ratios,
            )
        diag.differences.append(diff)
        if prev_diff is not None:
            diag.ratios.append(diff / prev_diff if prev_diff > 0 else 0.0)
        logger.debug("picard sweep %d: |du|_X = %.3e", sweep, diff)
        u, prev_diff = u_new, diff
        diag.iterations = sweep
        if diff < tol_picard:
            diag.converged = True
            return u, diag
    raise ContractionFailure(
        "contraction failure; data likely violates smallness regime "
        "(c0 = %.3e, last ratio %s after %d sweeps)"
        % (c0, "%.3f" % diag.ratios[-1] if diag.ratios else "n/a", max_iter),
        c0=c0,
        ratios=diag.ratios,
    )


def _per_step(spec, d, grid, base, stepper, tol, max_iter, diag):
    n, N, Nt = spec.n, grid.Nx + 2, grid.Nt
    u = np.empty((Nt + 1, n, N))
    u[0] = d.u0
    lift = stepper.prepare(d.mu, d.nu)
    flat = u.reshape(Nt + 1, -1)

    def level_source(m, state):
        G = -eval_nonlinearity(spec, state[None], grid, times=[m * grid.dt]).G
        return stepper.source_level(SourceBundle(base.f[m:m + 1], G), 0)

    s_prev = level_source(0, u[0])
    worst = 0
    for m in range(Nt):
        guess = flat[m].copy()
        for it in range(1, max_iter + 1):
            s_next = level_source(m + 1, guess.reshape(n, N))
            new = stepper.step(flat[m], m, s_prev, s_next, lift)
            change = float(np.max(np.abs(new - guess)))
            guess = new
            if change < tol:
                break
        else:
            raise ContractionFailure(
                "per-step iteration failed to converge at step %d" % (m + 1), c0=diag.c0
            )
        worst = max(worst, it)
        flat[m + 1] = guess
        s_prev = level_source(m + 1, u[m + 1])
    diag.iterations = worst
    diag.converged = True
    return Trajectory(u, grid, spec.l), diag
