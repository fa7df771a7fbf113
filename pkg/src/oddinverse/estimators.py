"""Estimator-style wrappers over the functional solvers.

``fit`` takes a :class:`~oddinverse.model.ProblemData`; hyperparameters
(system, grid, tolerances) are constructor arguments, so ``get_params`` /
``set_params`` / ``clone`` work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .forward import solve_nonlinear_forward
from .inverse import solve_linear_inverse, solve_nonlinear_inverse
from .model import Grid, ProblemData, SystemSpec
from .presets import preset


def _system(system, params):
    if isinstance(system, SystemSpec):
        return system
    return preset(system, **(params or {}))


def _check_data(data, spec):
    if not isinstance(data, ProblemData):
        raise TypeError("expected ProblemData, got %s" % type(data).__name__)
    if data.n != spec.n or data.l != spec.l:
        raise ValueError("data are for (l, n) = (%d, %d) but the system has (%d, %d)" % (data.l, data.n, spec.l, spec.n))
    return data


def _interp_rows(t_grid, values, t):
    """Linear interpolation in time along axis 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < t_grid[0] - 1e-12) or np.any(t > t_grid[-1] + 1e-12):
        raise ValueError("requested times outside [0, T]")
    flat = values.reshape(values.shape[0], -1)
    out = np.stack([np.interp(t, t_grid, col) for col in flat.T], axis=-1)
    return out.reshape((len(t),) + values.shape[1:])


class ForwardSolver(BaseEstimator):
    """Solve the direct problem; ``predict(t)`` returns ``u`` at times ``t``."""

    def __init__(self, system="kdv", system_params=None, R=1.0, T=1.0, Nx=128, Nt=128, tol_picard=1e-10, max_iter=50, mode="global"):
        self.system = system
        self.system_params = system_params
        self.R = R
        self.T = T
        self.Nx = Nx
        self.Nt = Nt
        self.tol_picard = tol_picard
        self.max_iter = max_iter
        self.mode = mode

    def fit(self, X, y=None):
        spec = _system(self.system, self.system_params)
        data = _check_data(X, spec)
        self.grid_ = Grid(self.R, self.T, self.Nx, self.Nt)
        self.trajectory_, self.diagnostics_ = solve_nonlinear_forward(
            spec, data, self.grid_, self.tol_picard, self.max_iter, self.mode
        )
        return self

    def predict(self, t=None):
        check_is_fitted(self, "trajectory_")
        if t is None:
            return self.trajectory_.u
        return _interp_rows(self.grid_.t, self.trajectory_.u, t)


class SourceReconstructor(BaseEstimator):
    """Recover the amplitudes ``F_ki``; ``predict(t)`` returns them as columns
    ordered by component, then amplitude index."""

    def __init__(self, system="kdv", system_params=None, R=1.0, T=1.0, Nx=128, Nt=128, method="march", tol_outer=1e-8, max_outer=50, gamma0=None):
        self.system = system
        self.system_params = system_params
        self.R = R
        self.T = T
        self.Nx = Nx
        self.Nt = Nt
        self.method = method
        self.tol_outer = tol_outer
        self.max_outer = max_outer
        self.gamma0 = gamma0

    def fit(self, X, y=None):
        spec = _system(self.system, self.system_params)
        data = _check_data(X, spec)
        self.grid_ = Grid(self.R, self.T, self.Nx, self.Nt)
        inner = {"gamma0": self.gamma0} if self.method == "picard" else {}
        if spec.nonlinearity.is_zero:
            self.result_ = solve_linear_inverse(spec, data, self.grid_, method=self.method, **inner)
        else:
            self.result_ = solve_nonlinear_inverse(
                spec, data, self.grid_, tol_outer=self.tol_outer, max_outer=self.max_outer, method=self.method, **inner
            )
        self.F_ = self.result_.F
        self.trajectory_ = self.result_.trajectory
        return self

    def predict(self, t=None):
        check_is_fitted(self, "F_")
        cols = np.stack([self.F_[i][k] for i, k in self.result_.pairs()], axis=1)
        if t is None:
            return cols
        return _interp_rows(self.grid_.t, cols, t)
