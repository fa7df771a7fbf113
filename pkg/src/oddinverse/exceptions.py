class ValidationRefused(ValueError):
    """Input data violate a structural condition; nothing was solved."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateOverdetermination(ValidationRefused):
    """The control/weight matrix is (numerically) singular at some time."""

    def __init__(self, message, t=None, delta=None):
        super().__init__(message)
        self.t = t
        self.delta = delta


class CompatibilityError(ValidationRefused):
    """``phi(0)`` disagrees with the weighted integral of the initial datum."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SolverError(RuntimeError):
    """A discrete solve failed."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NonFiniteValue(SolverError):
    pass


class ContractionFailure(SolverError):
    """Fixed-point iteration did not converge; data likely outside the smallness regime."""

    def __init__(self, message, c0=None, ratios=()):
        super().__init__(message)
        self.c0 = c0
        self.ratios = list(ratios)
