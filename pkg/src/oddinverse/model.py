"""Domain types for odd-order quasilinear systems and the structural checks
that must pass before a solve.

Indexing is 0-based internally (component ``i``, control ``k``); file and
column names use 1-based indices.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import sympy

from . import norms
from .exceptions import ValidationRefused
from .expressions import ExprField, compile_y, parse, t_sym, x_sym, y_symbol
from .stencils import trapezoid_weights


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on ``[0, T] x [0, R]``.

    ``Nx`` counts interior nodes, so there are ``Nx + 2`` spatial nodes
    including both ends, and ``Nt + 1`` time levels.
    """

    R: float
    T: float
    Nx: int
    Nt: int

    def __post_init__(self):
        if not (self.R > 0 and self.T > 0):
            raise ValueError("R and T must be positive")
        if self.Nx < 1 or self.Nt < 1:
            raise ValueError("Nx and Nt must be positive")

    @property
    def dx(self):
        return self.R / (self.Nx + 1)

    @property
    def dt(self):
        return self.T / self.Nt

    @property
    def x(self):
        return np.linspace(0.0, self.R, self.Nx + 2)

    @property
    def t(self):
        return np.linspace(0.0, self.T, self.Nt + 1)

    @property
    def wx(self):
        return trapezoid_weights(self.Nx + 2, self.dx)

    @property
    def wt(self):
        return trapezoid_weights(self.Nt + 1, self.dt)

    def check_stencil(self, l):
        if self.Nx < 4 * l + 2:
            raise ValidationRefused(
                "grid too coarse: Nx=%d < 4l+2=%d for l=%d" % (self.Nx, 4 * l + 2, l)
            )


# ---------------------------------------------------------------------------
# coefficient fields


class Coefficient:
    """An ``n x n`` matrix field ``a(t, x)`` with x-derivatives on demand.

    Build one with :meth:`constant`, :meth:`from_exprs`, :meth:`from_function`
    or :meth:`from_samples`; evaluate with ``coef.eval(t, x, d)`` which
    returns an array of shape ``(n, n, len(x))``.
    """

    def __init__(self, n, evaluator, time_dependent=True, sym=None, is_constant=False):
        self.n = n
        self._evaluator = evaluator
        self.time_dependent = time_dependent
        self.sym = sym
        self.is_constant = is_constant

    @classmethod
    def constant(cls, matrix):
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise ValueError("coefficient matrix must be square")

        def evaluator(t, x, d):
            x = np.atleast_1d(x)
            if d > 0:
                return np.zeros((n, n, x.size))
            return np.repeat(mat[:, :, None], x.size, axis=2)

        return cls(n, evaluator, time_dependent=False, sym=sympy.Matrix(mat.tolist()), is_constant=True)

    @classmethod
    def from_exprs(cls, exprs, params=None):
        rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in exprs]
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ValueError("coefficient expression matrix must be square")
        sym = sympy.Matrix([[parse(e, params) for e in r] for r in rows])
        fields_cache = {}

        def entry(a, b, d):
            key = (a, b, d)
            if key not in fields_cache:
                fields_cache[key] = ExprField(sympy.diff(sym[a, b], x_sym, d), ("t", "x"))
            return fields_cache[key]

        def evaluator(t, x, d):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            out = np.empty((n, n, x.size))
            for a in range(n):
                for b in range(n):
                    out[a, b] = entry(a, b, d)(t, x)
            return out

        time_dep = any(t_sym in e.free_symbols for e in sym)
        return cls(n, evaluator, time_dependent=time_dep, sym=sym)

    @classmethod
    def from_function(cls, fn, n, time_dependent=True):
        """``fn(t, x, d)`` returns the ``d``-th x-derivative, shape ``(n, n, len(x))``."""
        return cls(n, fn, time_dependent=time_dependent)

    @classmethod
    def from_samples(cls, t, x, values):
        """Tabulated coefficient, ``values`` of shape ``(len(t), n, n, len(x))``.

        Piecewise-linear in ``t``; x-derivatives by repeated second-order
        differences, so derivative evaluations are approximate.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        n = values.shape[1]
        derivs = [values]

        def evaluator(tt, xx, d):
            while len(derivs) <= d:
                derivs.append(np.gradient(derivs[-1], x, axis=-1, edge_order=2))
            tab = derivs[d]
            k = np.clip(np.searchsorted(t, tt) - 1, 0, len(t) - 2)
            theta = (tt - t[k]) / (t[k + 1] - t[k])
            row = (1 - theta) * tab[k] + theta * tab[k + 1]
            xx = np.atleast_1d(xx)
            out = np.empty((n, n, xx.size))
            for a in range(n):
                for b in range(n):
                    out[a, b] = np.interp(xx, x, row[a, b])
            return out

        return cls(n, evaluator, time_dependent=len(t) > 1)

    def eval(self, t, x, d=0):
        return np.asarray(self._evaluator(t, x, d), dtype=float)


# ---------------------------------------------------------------------------
# nonlinearity


def exponent_bound(l, j, k, m):
    return (4 * l - 2 * j - 2 * k) / (2 * m + 1)


@dataclass(frozen=True)
class NonlinearitySpec:
    """The terms ``g_j(t, x, y_0, ..., y_{l-1})``, ``j = 0..l``.

    ``terms[j]`` is called as ``g(t, x, y)`` with ``y`` of shape ``(l, n, nx)``
    (``y[m, i]`` is the ``m``-th x-derivative of component ``i``) and returns
    shape ``(n, nx)``. ``exponents`` maps ``(j, k, m)`` to ``(b1, b2)``; absent
    triples mean ``g_j`` does not grow through that pair.
    """

    l: int
    n: int
    terms: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)
    gradients: dict = field(default_factory=dict)
    symbolic: Optional[dict] = None
    name: str = "custom"

    @classmethod
    def zero(cls, l, n):
        return cls(l, n, name="none", symbolic={})

    @classmethod
    def from_exprs(cls, l, n, exprs, exponents=None, params=None, name="custom"):
        """Build from expression strings in ``t, x, y<m>_<i>`` (``i`` 1-based)."""
        symbolic, terms, gradients = {}, {}, {}
        for j, comps in exprs.items():
            j = int(j)
            if not 0 <= j <= l:
                raise ValueError("nonlinearity index j=%d outside 0..%d" % (j, l))
            comps = list(comps) if isinstance(comps, (list, tuple)) else [comps]
            if len(comps) != n:
                raise ValueError("g_%d needs %d components" % (j, n))
            sym = [parse(c, params, allow_y=True) for c in comps]
            if all(s == 0 for s in sym):
                continue
            symbolic[j] = sym
            terms[j] = _vector_evaluator(sym, l, n)
            for k in range(l):
                jac = [[sympy.diff(s, y_symbol(k, c)) for c in range(n)] for s in sym]
                gradients[(j, k)] = _matrix_evaluator(jac, l, n)
        exps = {tuple(int(v) for v in key): tuple(float(b) for b in val) for key, val in (exponents or {}).items()}
        return cls(l, n, terms, exps, gradients, symbolic, name)

    @property
    def is_zero(self):
        return not self.terms

    def evaluate(self, j, t, x, y):
        if j not in self.terms:
            return np.zeros(np.shape(y)[1:])
        return np.asarray(self.terms[j](t, x, y), dtype=float)

    def scaled(self, factor):
        """Nonlinearity multiplied by ``factor`` (0 switches it off)."""
        if factor == 0:
            return NonlinearitySpec.zero(self.l, self.n)
        terms = {j: (lambda g: lambda t, x, y: factor * g(t, x, y))(g) for j, g in self.terms.items()}
        grads = {k: (lambda g: lambda t, x, y: factor * g(t, x, y))(g) for k, g in self.gradients.items()}
        sym = None if self.symbolic is None else {j: [factor * s for s in v] for j, v in self.symbolic.items()}
        return replace(self, terms=terms, gradients=grads, symbolic=sym)


def _vector_evaluator(sym, l, n):
    comps = [compile_y(s, l, n) for s in sym]

    def evaluate(t, x, y):
        return np.stack([c(t, x, y) for c in comps])

    return evaluate


def _matrix_evaluator(jac, l, n):
    entries = [[compile_y(e, l, n) for e in row] for row in jac]

    def evaluate(t, x, y):
        return np.stack([np.stack([e(t, x, y) for e in row]) for row in entries])

    return evaluate


# ---------------------------------------------------------------------------
# the system


@dataclass(frozen=True)
class SystemSpec:
    """Order ``2l+1`` system with constant diagonal leading coefficients.

    ``lower_coeffs`` maps ``j in 0..2l-1`` to a :class:`Coefficient`;
    missing entries are zero.
    """

    l: int
    n: int
    a_top: tuple
    a_sub: tuple
    lower_coeffs: dict = field(default_factory=dict)
    nonlinearity: Optional[NonlinearitySpec] = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "a_top", tuple(float(a) for a in np.atleast_1d(self.a_top)))
        object.__setattr__(self, "a_sub", tuple(float(a) for a in np.atleast_1d(self.a_sub)))
        coeffs = {}
        for j, c in self.lower_coeffs.items():
            coeffs[int(j)] = c if isinstance(c, Coefficient) else Coefficient.constant(c)
        object.__setattr__(self, "lower_coeffs", coeffs)
        if self.nonlinearity is None:
            object.__setattr__(self, "nonlinearity", NonlinearitySpec.zero(self.l, self.n))

    @property
    def order(self):
        return 2 * self.l + 1

    @property
    def time_dependent(self):
        return any(c.time_dependent for c in self.lower_coeffs.values())

    def coefficient(self, j):
        return self.lower_coeffs.get(j)

    def alpha0(self, R):
        """Coercivity margin: the minimum of a linear function of ``x`` is at an end."""
        vals = [
            (2 * self.l + 1) * a - 2 * b * (1 + x)
            for a, b in zip(self.a_top, self.a_sub)
            for x in (0.0, R)
        ]
        return min(vals) if vals else float("nan")

    def linear(self):
        return replace(self, nonlinearity=NonlinearitySpec.zero(self.l, self.n))

    def with_nonlinearity(self, nonlinearity):
        return replace(self, nonlinearity=nonlinearity)


# ---------------------------------------------------------------------------
# overdetermination weights


class Weight:
    """Scalar weight ``omega(x)`` with derivative evaluators.

    ``weight(x, d)`` evaluates the ``d``-th derivative.
    """

    def __init__(self, derivatives, R, sym=None, sampled=False, spacing=None):
        self._derivs = list(derivatives)
        self.R = float(R)
        self.sym = sym
        self.sampled = sampled
        self.spacing = spacing

    @classmethod
    def from_expr(cls, expr, R, params=None):
        sym = parse(expr, params)
        if t_sym in sym.free_symbols:
            raise ValueError("a weight depends on x only")
        w = cls([], R, sym=sym)
        return w

    @classmethod
    def from_callables(cls, derivatives, R):
        return cls(derivatives, R)

    @classmethod
    def from_samples(cls, x, values):
        """Tabulated weight; derivatives by repeated second-order differences."""
        x = np.asarray(x, dtype=float)
        tab = [np.asarray(values, dtype=float)]
        for _ in range(4):
            tab.append(np.gradient(tab[-1], x, edge_order=2))
        derivs = [(lambda v: lambda xx: np.interp(xx, x, v))(v) for v in tab]
        return cls(derivs, x[-1] - x[0], sampled=True, spacing=float(x[1] - x[0]))

    @property
    def max_order(self):
        return np.inf if self.sym is not None else len(self._derivs) - 1

    def __call__(self, x, d=0):
        x = np.asarray(x, dtype=float)
        if self.sym is not None:
            while len(self._derivs) <= d:
                self._derivs.append(ExprField(sympy.diff(self.sym, x_sym, len(self._derivs)), ("x",)))
            return self._derivs[d](x)
        if d >= len(self._derivs):
            raise ValueError("weight has no derivative of order %d" % d)
        return np.broadcast_to(np.asarray(self._derivs[d](x), dtype=float), x.shape).copy()


@dataclass(frozen=True)
class Overdetermination:
    """One integral condition ``int u_i omega dx = phi(t)``.

    ``phi`` and the optional derivative ``dphi`` are numbers, callables of
    ``t`` or arrays of length ``Nt + 1``.
    """

    weight: Weight
    phi: object
    dphi: object = None


# ---------------------------------------------------------------------------
# problem data


def _sample_item(item, kind, grid):
    shape = {"x": (grid.Nx + 2,), "t": (grid.Nt + 1,), "tx": (grid.Nt + 1, grid.Nx + 2)}[kind]
    if item is None:
        return np.zeros(shape)
    if isinstance(item, (int, float, np.floating, np.integer)):
        return np.full(shape, float(item))
    if callable(item):
        if kind == "x":
            out = item(grid.x)
        elif kind == "t":
            out = item(grid.t)
        else:
            out = item(grid.t[:, None], grid.x[None, :])
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
    arr = np.asarray(item, dtype=float)
    if arr.shape != shape:
        raise ValidationRefused("sample shape %s does not match grid shape %s" % (arr.shape, shape))
    return arr.copy()


def _sample_vector(items, n, kind, grid):
    if isinstance(items, np.ndarray) and items.ndim >= 1 and items.shape[0] == n and items.ndim == len(kind) + 1:
        items = list(items)
    if items is None:
        items = [None] * n
    elif not isinstance(items, (list, tuple)):
        if n != 1:
            raise ValidationRefused("expected %d components" % n)
        items = [items]
    if len(items) != n:
        raise ValidationRefused("expected %d components, got %d" % (n, len(items)))
    return np.stack([_sample_item(it, kind, grid) for it in items])


@dataclass(frozen=True)
class ProblemData:
    """Initial, boundary, source and overdetermination data.

    Vector-valued entries are lists with one item per component (a bare item
    is accepted when ``n == 1``); each item is a number, a callable (of ``x``,
    ``t`` or ``(t, x)`` as appropriate) or an array sampled on the grid.
    ``controls[i]`` lists the scalar profiles ``h_{ki}`` for component ``i``
    and ``overdet[i]`` the matching :class:`Overdetermination` conditions.
    """

    n: int
    l: int
    u0: object = None
    mu: tuple = ()
    nu: tuple = ()
    h0: object = None
    controls: dict = field(default_factory=dict)
    overdet: dict = field(default_factory=dict)
    known_F: Optional[dict] = None

    def __post_init__(self):
        mu = tuple(self.mu) + (None,) * (self.l - len(self.mu))
        nu = tuple(self.nu) + (None,) * (self.l + 1 - len(self.nu))
        if len(mu) != self.l or len(nu) != self.l + 1:
            raise ValidationRefused(
                "need %d left and %d right boundary traces" % (self.l, self.l + 1)
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    def m(self, i):
        return len(self.controls.get(i, ()))

    @property
    def M(self):
        return sum(self.m(i) for i in range(self.n))

    @property
    def controlled(self):
        return [i for i in range(self.n) if self.m(i) > 0]

    def sample(self, grid):
        return DiscreteData.from_problem(self, grid)


@dataclass
class DiscreteData:
    """All problem data sampled on one grid.

    Shapes: ``u0 (n, Nx+2)``, ``mu (l, n, Nt+1)``, ``nu (l+1, n, Nt+1)``,
    ``h0 (Nt+1, n, Nx+2)``, ``controls[i] (m_i, Nt+1, Nx+2)``,
    ``phi[i]`` / ``dphi[i]`` / ``known_F[i]`` ``(m_i, Nt+1)``.
    """

    grid: Grid
    n: int
    l: int
    u0: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    h0: np.ndarray
    controls: dict
    weights: dict
    phi: dict
    dphi: dict
    known_F: Optional[dict] = None

    @classmethod
    def from_problem(cls, data, grid):
        n, l = data.n, data.l
        u0 = _sample_vector(data.u0, n, "x", grid)
        mu = np.stack([_sample_vector(m, n, "t", grid) for m in data.mu]) if l else np.zeros((0, n, grid.Nt + 1))
        nu = np.stack([_sample_vector(v, n, "t", grid) for v in data.nu])
        h0 = _sample_vector(data.h0, n, "tx", grid).transpose(1, 0, 2).copy()
        controls, weights, phi, dphi = {}, {}, {}, {}
        for i, profiles in data.controls.items():
            if not profiles:
                continue
            controls[i] = np.stack([_sample_item(h, "tx", grid) for h in profiles])
            conds = data.overdet.get(i, [])
            if len(conds) != len(profiles):
                raise ValidationRefused(
                    "component %d has %d controls but %d overdetermination conditions"
                    % (i + 1, len(profiles), len(conds))
                )
            weights[i] = [c.weight for c in conds]
            phi[i] = np.stack([_sample_item(c.phi, "t", grid) for c in conds])
            dphi[i] = np.stack(
                [
                    np.gradient(p, grid.dt, edge_order=2) if c.dphi is None else _sample_item(c.dphi, "t", grid)
                    for p, c in zip(phi[i], conds)
                ]
            )
        known = None
        if data.known_F is not None:
            known = {i: np.stack([_sample_item(F, "t", grid) for F in series]) for i, series in data.known_F.items() if series}
        out = cls(grid, n, l, u0, mu, nu, h0, controls, weights, phi, dphi, known)
        out.check_finite()
        return out

    def check_finite(self):
        arrays = [self.u0, self.mu, self.nu, self.h0]
        for d in (self.controls, self.phi, self.dphi, self.known_F or {}):
            arrays.extend(d.values())
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise ValidationRefused("data contain non-finite samples")

    @property
    def controlled(self):
        return sorted(self.controls)

    def m(self, i):
        return len(self.controls[i]) if i in self.controls else 0

    @property
    def M(self):
        return sum(self.m(i) for i in range(self.n))

    @property
    def is_zero(self):
        arrays = [self.u0, self.mu, self.nu, self.h0]
        arrays.extend(self.phi.values())
        arrays.extend(self.dphi.values())
        if self.known_F:
            arrays.extend(self.known_F.values())
        return all(not np.any(a) for a in arrays)


def as_discrete(data, grid):
    return data if isinstance(data, DiscreteData) else DiscreteData.from_problem(data, grid)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def extend(self, other):
        self.violations.extend(other.violations)
        self.values.update(other.values)
        return self


def validate_system(spec, R=1.0, grid=None, n_probe=7, seed=0):
    """Sign conditions on the leading coefficients, coercivity margin,
    dimensions, finiteness of lower-order coefficients and ``g_j(., 0) = 0``."""
    report = ValidationReport()
    if grid is not None:
        R = grid.R
    if spec.l < 1 or spec.n < 1:
        report.violations.append("l and n must be positive integers")
        return report
    for name, vals in (("a_top", spec.a_top), ("a_sub", spec.a_sub)):
        if len(vals) != spec.n:
            report.violations.append("%s has %d entries, expected n=%d" % (name, len(vals), spec.n))
    if report.violations:
        return report
    for i, (a, b) in enumerate(zip(spec.a_top, spec.a_sub)):
        if not a > 0:
            report.violations.append("a_top[%d] = %g must be > 0" % (i + 1, a))
        if not b <= 0:
            report.violations.append("a_sub[%d] = %g must be <= 0" % (i + 1, b))
    alpha0 = spec.alpha0(R)
    report.values["alpha0"] = alpha0
    if not alpha0 > 0:
        report.violations.append("coercivity margin alpha0 = %g is not positive" % alpha0)

    x = np.linspace(0.0, R, 33)
    times = [0.0] if grid is None else [0.0, 0.5 * grid.T, grid.T]
    for j, coef in spec.lower_coeffs.items():
        if not 0 <= j <= 2 * spec.l - 1:
            report.violations.append("lower coefficient index %d outside 0..%d" % (j, 2 * spec.l - 1))
            continue
        if coef.n != spec.n:
            report.violations.append("coefficient a_%d is %dx%d, expected n=%d" % (j, coef.n, coef.n, spec.n))
            continue
        # smoothness is only probed as finiteness of the derivatives in use
        for t in times:
            for d in range(j // 2 + 2):
                if not np.all(np.isfinite(coef.eval(t, x, d))):
                    report.violations.append("coefficient a_%d (derivative %d) not finite at t=%g" % (j, d, t))
                    break

    nl = spec.nonlinearity
    if nl is not None and not nl.is_zero:
        if nl.l != spec.l or nl.n != spec.n:
            report.violations.append("nonlinearity dimensions do not match the system")
        else:
            rng = np.random.default_rng(seed)
            T = 1.0 if grid is None else grid.T
            tp = rng.uniform(0, T, n_probe)
            xp = rng.uniform(0, R, n_probe)
            zero = np.zeros((spec.l, spec.n, n_probe))
            for j in nl.terms:
                vals = np.array([nl.evaluate(j, tp[s], xp[s:s + 1], zero[:, :, s:s + 1]) for s in range(n_probe)])
                if not np.allclose(vals, 0.0, atol=1e-12):
                    report.violations.append("g_%d(t, x, 0) is not zero" % j)
        for key, (b1, b2) in nl.exponents.items():
            if not 0 < b1 <= b2:
                report.violations.append("exponents for %s need 0 < b1 <= b2, got (%g, %g)" % (key, b1, b2))
    return report


def validate_exponents(spec, mode="nonstrict"):
    """Check ``b2(j,k,m)`` against ``(4l - 2j - 2k) / (2m + 1)``."""
    if mode not in ("strict", "nonstrict"):
        raise ValueError("mode must be 'strict' or 'nonstrict'")
    report = ValidationReport()
    l = spec.l
    table = spec.nonlinearity.exponents if spec.nonlinearity is not None else {}
    for (j, k, m), (b1, b2) in sorted(table.items()):
        if not (0 <= j <= l and 0 <= k <= l - 1 and 0 <= m <= l - 1):
            report.violations.append("exponent index (%d,%d,%d) out of range" % (j, k, m))
            continue
        bound = exponent_bound(l, j, k, m)
        bad = b2 >= bound if mode == "strict" else b2 > bound
        if bad:
            rel = "<" if mode == "strict" else "<="
            report.violations.append(
                "b2(%d,%d,%d) = %g violates b2 %s %g" % (j, k, m, b2, rel, bound)
            )
    report.values["mode"] = mode
    return report


def validate_weight(weight, l, tol_bc=None, R=None):
    """Vanishing of ``omega^(m)`` at 0 (m <= l) and at R (m <= l-1)."""
    R = weight.R if R is None else R
    if tol_bc is None:
        tol_bc = 10.0 * weight.spacing**2 if weight.sampled else 1e-10
    report = ValidationReport(values={"tol_bc": tol_bc})
    for m in range(l + 1):
        v = float(weight(np.array([0.0]), m)[0])
        if abs(v) > tol_bc:
            report.violations.append("omega^(%d)(0) = %.3g exceeds %.1e" % (m, v, tol_bc))
    for m in range(l):
        v = float(weight(np.array([R]), m)[0])
        if abs(v) > tol_bc:
            report.violations.append("omega^(%d)(R) = %.3g exceeds %.1e" % (m, v, tol_bc))
    return report


def check_compatibility(data, grid):
    """``|phi_ki(0) - int u0_i omega_ki dx|`` for every condition, keyed by component."""
    d = as_discrete(data, grid)
    out = {}
    for i in d.controlled:
        q0 = np.array([d.u0[i] * w(grid.x) @ grid.wx for w in d.weights[i]])
        out[i] = np.abs(d.phi[i][:, 0] - q0)
    return out


def compute_c0(data, grid, mode="direct"):
    """Aggregate data norm gating the small-data regime.

    ``direct``: initial datum, boundary traces and the full source
    (``h0`` plus any known amplitudes times controls). ``inverse``: the known
    part ``h0`` of the source plus the L1 norms of ``phi'``.
    """
    if mode not in ("direct", "inverse"):
        raise ValueError("mode must be 'direct' or 'inverse'")
    d = as_discrete(data, grid)
    total = float(np.sum(norms.l2_norm(d.u0, grid.dx)))
    total += norms.boundary_norm(d.mu, d.nu, d.l, grid.dt)
    if mode == "direct":
        from .inverse import assemble_source

        f = assemble_source(d.h0, d.controls, d.known_F or {})
        total += norms.l1_l2_norm(f, grid.dx, grid.dt)
    else:
        total += norms.l1_l2_norm(d.h0, grid.dx, grid.dt)
        for i in d.controlled:
            total += sum(norms.l1_norm(p, grid.dt) for p in d.dphi[i])
    return total


def compute_sigma_T0(spec, delta, stability_constant=1.0, dt=None):
    """Exponent margin ``sigma`` and an advisory time horizon ``T0``.

    ``T0`` solves ``4 c T0**sigma ((2 c delta)**b1 + (2 c delta)**b2) = 1``
    with ``c`` an empirically measured stability constant (the analytic one
    is not computable); it is rounded down to a multiple of ``dt`` if given.
    """
    table = spec.nonlinearity.exponents if spec.nonlinearity is not None else {}
    l = spec.l
    if not table:
        return np.inf, np.inf
    sigma = min((4 * l - 2 * j - 2 * k - (2 * m + 1) * b2) / (4 * l) for (j, k, m), (_, b2) in table.items())
    if sigma <= 0:
        raise ValueError("sigma = %g <= 0: strict exponent condition violated" % sigma)
    b1 = min(b for b, _ in table.values())
    b2 = max(b for _, b in table.values())
    c = float(stability_constant)
    growth = (2 * c * delta) ** b1 + (2 * c * delta) ** b2
    if growth <= 0:
        return sigma, np.inf
    # log form: 1 / sigma is huge near the strict bound
    with np.errstate(over="ignore"):
        T0 = float(np.exp(-np.log(4 * c * growth) / sigma))
    if dt is not None:
        T0 = np.floor(T0 / dt + 1e-12) * dt
    return sigma, T0
