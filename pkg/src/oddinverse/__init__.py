"""Forward and inverse source problems for odd-order quasilinear evolution systems.

The package discretises systems of the form

    u_t - (-1)**l (a_{2l+1} d^{2l+1} u + a_{2l} d^{2l} u)
        - sum_{j<l} (-1)**j d^j (a_{2j+1} d^{j+1} u + a_{2j} d^j u)
        + sum_{j<=l} (-1)**j d^j g_j(t, x, u, ..., d^{l-1} u) = f

on a bounded interval and recovers time-dependent source amplitudes from
integral overdetermination data.
"""

from .exceptions import (
    CompatibilityError,
    ContractionFailure,
    DegenerateOverdetermination,
    NonFiniteValue,
    SolverError,
    ValidationRefused,
)
from .forward import (
    SourceBundle,
    Trajectory,
    assemble_linear_operator,
    eval_nonlinearity,
    lift_boundary,
    solve_linear_forward,
    solve_nonlinear_forward,
)
from .functionals import cramer_quotients, cramer_source_step, psi_matrix, q_functional, r_functional
from .inverse import (
    ReconstructionResult,
    assemble_source,
    solve_linear_inverse,
    solve_nonlinear_inverse,
    stability_probe,
)
from .manufactured import generate_manufactured
from .model import (
    Coefficient,
    Grid,
    NonlinearitySpec,
    Overdetermination,
    ProblemData,
    SystemSpec,
    Weight,
    check_compatibility,
    compute_c0,
    compute_sigma_T0,
    validate_exponents,
    validate_system,
    validate_weight,
)
from .presets import preset

__version__ = "0.1.0"

__all__ = [
    "Coefficient",
    "CompatibilityError",
    "ContractionFailure",
    "DegenerateOverdetermination",
    "Grid",
    "NonFiniteValue",
    "NonlinearitySpec",
    "Overdetermination",
    "ProblemData",
    "ReconstructionResult",
    "SolverError",
    "SourceBundle",
    "SystemSpec",
    "Trajectory",
    "ValidationRefused",
    "Weight",
    "assemble_linear_operator",
    "assemble_source",
    "check_compatibility",
    "compute_c0",
    "compute_sigma_T0",
    "cramer_quotients",
    "cramer_source_step",
    "eval_nonlinearity",
    "generate_manufactured",
    "lift_boundary",
    "preset",
    "psi_matrix",
    "q_functional",
    "r_functional",
    "solve_linear_forward",
    "solve_linear_inverse",
    "solve_nonlinear_forward",
    "solve_nonlinear_inverse",
    "stability_probe",
    "validate_exponents",
    "validate_system",
    "validate_weight",
]
