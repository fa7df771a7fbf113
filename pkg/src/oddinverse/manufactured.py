"""Manufactured solutions: plant ``u*`` and ``F*``, derive consistent data.

The known source ``h0`` comes from substituting ``u*`` into the equation,
traces from its x-derivatives at the ends and the targets ``phi`` from
Gauss-Legendre quadrature of ``u*`` against the weights.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy

from .expressions import ExprField, parse, t_sym, x_sym, y_symbol
from .model import Overdetermination, ProblemData, Weight

GAUSS_POINTS = 64


class ManufactureError(ValueError):
    pass


def _callable_t(expr):
    f = ExprField(expr, ("t",))
    return lambda t: f(t)


def _callable_x(expr):
    f = ExprField(expr, ("x",))
    return lambda x: f(x)


def _callable_tx(expr):
    f = ExprField(expr, ("t", "x"))
    return lambda t, x: f(t, x)


@dataclass
class ManufacturedCase:
    """Planted solution with every derived datum as a sympy expression.

    ``u[i]`` is ``u*_i``; ``F[i][k]`` and ``controls[i][k]`` are the planted
    amplitudes and their profiles; ``weights[i][k]`` the overdetermination
    weights; ``h0[i]``, ``mu[j][i]`` and ``nu[j][i]`` the derived source and
    traces. ``phi``/``dphi`` are evaluated numerically by quadrature.
    """

    spec: object
    R: float
    u: list
    h0: list
    mu: list
    nu: list
    F: dict = field(default_factory=dict)
    controls: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    residual: float = 0.0

    def _quad(self, expr_t, omega, t):
        xg, wg = np.polynomial.legendre.leggauss(GAUSS_POINTS)
        xq = 0.5 * self.R * (xg + 1.0)
        wq = 0.5 * self.R * wg
        fn = ExprField(expr_t, ("t", "x"))
        w = ExprField(omega, ("x",))(xq) * wq
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return fn(t[:, None], xq[None, :]) @ w

    def phi(self, i, k):
        ui, w = self.u[i], self.weights[i][k]
        return lambda t: self._quad(ui, w, t)

    def dphi(self, i, k):
        ut, w = sympy.diff(self.u[i], t_sym), self.weights[i][k]
        return lambda t: self._quad(ut, w, t)

    def problem(self, known_F=False, analytic_dphi=True):
        """:class:`ProblemData` for the inverse (or, with ``known_F``, direct) problem."""
        n, l = self.spec.n, self.spec.l
        controls, overdet = {}, {}
        for i, profiles in self.controls.items():
            controls[i] = [_callable_tx(h) for h in profiles]
            overdet[i] = [
                Overdetermination(
                    Weight.from_expr(w, self.R),
                    self.phi(i, k),
                    self.dphi(i, k) if analytic_dphi else None,
                )
                for k, w in enumerate(self.weights[i])
            ]
        known = {i: [_callable_t(f) for f in fs] for i, fs in self.F.items()} if known_F else None
        return ProblemData(
            n=n,
            l=l,
            u0=[_callable_x(u.subs(t_sym, 0)) for u in self.u],
            mu=[[_callable_t(e) for e in row] for row in self.mu],
            nu=[[_callable_t(e) for e in row] for row in self.nu],
            h0=[_callable_tx(h) for h in self.h0],
            controls=controls,
            overdet=overdet,
            known_F=known,
        )

    def exact_u(self, grid):
        return np.stack([ExprField(u)(grid.t[:, None], grid.x[None, :]) for u in self.u], axis=1)

    def exact_F(self, grid):
        return {i: np.stack([ExprField(f, ("t",))(grid.t) for f in fs]) for i, fs in self.F.items()}


def equation_terms(spec, u):
    """Sympy list of ``(name, expr)`` whose sum is the left side applied to ``u``."""
    l, n = spec.l, spec.n
    out = [("u_t", [sympy.diff(ui, t_sym) for ui in u])]
    lead = []
    for i in range(n):
        lead.append(
            -((-1) ** l)
            * (spec.a_top[i] * sympy.diff(u[i], x_sym, 2 * l + 1) + spec.a_sub[i] * sympy.diff(u[i], x_sym, 2 * l))
        )
    out.append(("leading", lead))
    lower = [sympy.Integer(0)] * n
    for j in range(l):
        for idx, order in ((2 * j + 1, j + 1), (2 * j, j)):
            coef = spec.coefficient(idx)
            if coef is None:
                continue
            if coef.sym is None:
                raise ManufactureError("coefficient a_%d has no closed form" % idx)
            for i in range(n):
                inner = sum(coef.sym[i, m] * sympy.diff(u[m], x_sym, order) for m in range(n))
                lower[i] -= (-1) ** j * sympy.diff(inner, x_sym, j)
    out.append(("lower", lower))
    nl = spec.nonlinearity
    if nl is not None and not nl.is_zero:
        if nl.symbolic is None:
            raise ManufactureError("nonlinearity has no closed form")
        subs = {y_symbol(m, c): sympy.diff(u[c], x_sym, m) for m in range(l) for c in range(n)}
        terms = [sympy.Integer(0)] * n
        for j, comps in nl.symbolic.items():
            for i in range(n):
                terms[i] += (-1) ** j * sympy.diff(comps[i].subs(subs), x_sym, j)
        out.append(("nonlinear", terms))
    return out


def generate_manufactured(spec, u, F=None, controls=None, weights=None, R=1.0, params=None, verify=True):
    """Derive ``h0``, traces and targets from planted expressions.

    ``u`` lists one expression in ``t, x`` per component; ``F``, ``controls``
    and ``weights`` map a 0-based component index to lists of expressions.
    """
    n, l = spec.n, spec.l
    if len(u) != n:
        raise ManufactureError("need %d planted components" % n)
    u = [parse(e, params) for e in u]
    F = {int(i): [parse(e, params) for e in v] for i, v in (F or {}).items()}
    controls = {int(i): [parse(e, params) for e in v] for i, v in (controls or {}).items()}
    weights = {int(i): [parse(e, params) for e in v] for i, v in (weights or {}).items()}
    for i in set(F) | set(controls) | set(weights):
        if not (len(F.get(i, ())) == len(controls.get(i, ())) == len(weights.get(i, ()))):
            raise ManufactureError("component %d: F, controls and weights differ in length" % (i + 1))

    terms = equation_terms(spec, u)
    h0 = []
    for i in range(n):
        total = sum(vals[i] for _, vals in terms)
        total -= sum(f * h for f, h in zip(F.get(i, ()), controls.get(i, ())))
        h0.append(sympy.expand(total))
    mu = [[sympy.diff(ui, x_sym, j).subs(x_sym, 0) for ui in u] for j in range(l)]
    nu = [[sympy.diff(ui, x_sym, j).subs(x_sym, R) for ui in u] for j in range(l + 1)]
    case = ManufacturedCase(spec, float(R), u, h0, mu, nu, F, controls, weights)
    if verify:
        case.residual = verify_substitution(case, terms)
    return case


def verify_substitution(case, terms, nt=17, nx=65, tol=1e-8):
    """Evaluate every term separately on a grid and check they cancel."""
    t = np.linspace(0.0, 1.0, nt)[:, None]
    x = np.linspace(0.0, case.R, nx)[None, :]
    worst, where = 0.0, None
    for i in range(case.spec.n):
        parts = [ExprField(vals[i])(t, x) for _, vals in terms]
        parts.append(-ExprField(case.h0[i])(t, x))
        for f, h in zip(case.F.get(i, ()), case.controls.get(i, ())):
            parts.append(-ExprField(f * h)(t, x))
        total = sum(parts)
        scale = 1.0 + max(float(np.max(np.abs(p))) for p in parts)
        rel = np.abs(total) / scale
        k = np.unravel_index(np.argmax(rel), rel.shape)
        if rel[k] > worst:
            worst, where = float(rel[k]), (i, float(t[k[0], 0]), float(x[0, k[1]]))
    if worst > tol:
        raise ManufactureError(
            "substitution residual %.3e above %.0e at component %d, t=%g, x=%g" % ((worst, tol) + where)
        )
    return worst
