"""Closed-form expressions in ``t``, ``x`` and nonlinearity arguments.

Parsing and exact differentiation go through sympy; evaluation goes through
numpy via ``lambdify``.
"""

import re

import numpy as np
import sympy

t_sym, x_sym = sympy.symbols("t x", real=True)

_FUNCS = {
    name: getattr(sympy, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "Abs")
}
_FUNCS.update(pi=sympy.pi, E=sympy.E, abs=sympy.Abs)
_Y_NAME = re.compile(r"^y(\d+)_(\d+)$")


class ExpressionError(ValueError):
    pass


def y_symbol(m, i):
    """Symbol for the ``m``-th x-derivative of component ``i`` (0-based)."""
    return sympy.Symbol("y%d_%d" % (m, i + 1), real=True)


def parse(text, params=None, allow_y=False):
    """Parse ``text`` into a sympy expression over ``t``, ``x`` (and ``y<m>_<i>``)."""
    if isinstance(text, sympy.Basic):
        expr = text
    elif isinstance(text, (int, float)):
        return sympy.Float(text) if isinstance(text, float) else sympy.Integer(text)
    else:
        local = dict(_FUNCS)
        local.update(t=t_sym, x=x_sym)
        for key, val in (params or {}).items():
            local[key] = sympy.sympify(val)
        for name in set(re.findall(r"[A-Za-z_]\w*", str(text))):
            if _Y_NAME.match(name):
                local[name] = sympy.Symbol(name, real=True)
        try:
            expr = sympy.sympify(str(text), locals=local)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ExpressionError("cannot parse %r: %s" % (text, exc)) from exc
    allowed = {t_sym, x_sym}
    for sym in expr.free_symbols:
        if sym in allowed:
            continue
        if allow_y and _Y_NAME.match(sym.name):
            continue
        raise ExpressionError("unknown symbol %r in %r" % (sym.name, str(text)))
    return expr


class ExprField:
    """Scalar closed-form field; callable with positional args in ``variables`` order.

    >>> f = ExprField("x**2*(1 - x)", ("x",))
    >>> float(f.diff("x")(1.0))
    -1.0
    """

    def __init__(self, expr, variables=("t", "x"), params=None):
        self.sym = parse(expr, params)
        self.variables = tuple(variables)
        symbols = [sympy.Symbol(v, real=True) for v in self.variables]
        extra = self.sym.free_symbols - set(symbols)
        if extra:
            # e.g. a weight written with t in it
            raise ExpressionError(
                "expression %s depends on %s, expected only %s"
                % (self.sym, sorted(s.name for s in extra), self.variables)
            )
        self._fn = sympy.lambdify(symbols, self.sym, modules="numpy")

    def __call__(self, *args):
        args = [np.asarray(a, dtype=float) for a in args]
        out = np.asarray(self._fn(*args), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def diff(self, var, k=1):
        return ExprField(sympy.diff(self.sym, sympy.Symbol(var, real=True), k), self.variables)

    def subs(self, **values):
        expr = self.sym.subs({sympy.Symbol(k, real=True): v for k, v in values.items()})
        remaining = tuple(v for v in self.variables if v not in values)
        return ExprField(expr, remaining)

    @property
    def is_zero(self):
        return self.sym == 0

    def __repr__(self):
        return "ExprField(%r, %r)" % (str(self.sym), self.variables)


def compile_y(expr, l, n):
    """Numpy evaluator ``f(t, x, y)`` of an expression in ``t, x, y<m>_<i>``.

    ``y`` has shape ``(l, n, ...)``.
    """
    ys = [y_symbol(m, i) for m in range(l) for i in range(n)]
    fn = sympy.lambdify([t_sym, x_sym] + ys, expr, modules="numpy")

    def evaluate(t, x, y):
        y = np.asarray(y, dtype=float)
        flat = [y[m, i] for m in range(l) for i in range(n)]
        out = np.asarray(fn(t, x, *flat), dtype=float)
        return np.broadcast_to(out, y.shape[2:]) if out.shape != y.shape[2:] else out

    return evaluate
