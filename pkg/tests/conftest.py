import numpy as np
import pytest

from oddinverse.forward import SourceBundle, solve_linear_forward
from oddinverse.manufactured import generate_manufactured
from oddinverse.model import Grid, ProblemData, as_discrete
from oddinverse.presets import preset


def airy_case(u="exp(-t)*sin(pi*x)", **kw):
    return generate_manufactured(preset("airy"), [u], R=kw.pop("R", 1.0), **kw)


def linear_run(spec, case, grid, known_F=False):
    """Forward solve of a manufactured linear case; returns (trajectory, discrete data)."""
    d = as_discrete(case.problem(known_F=known_F), grid)
    f = d.h0.copy()
    if known_F:
        for i, H in d.controls.items():
            f[:, i, :] += np.einsum("kt,ktx->tx", d.known_F[i], H)
    traj = solve_linear_forward(spec, d.u0, d.mu, d.nu, SourceBundle(f, None), grid)
    return traj, d


@pytest.fixture(scope="session")
def airy():
    return preset("airy")


@pytest.fixture(scope="session")
def unit_grid():
    return Grid(1.0, 1.0, 64, 64)


def twin_problem(spec, F_star, omega, N_fine=512, R=1.0, T=1.0, control=1.0):
    """Twin data: phi recorded from a fine forward solve with planted ``F_star``.

    ``phi`` and ``phi'`` (centred differences) are interpolated in time so the
    data can be sampled on any coarser grid.
    """
    from oddinverse.model import Overdetermination

    g = Grid(R, T, N_fine, 2 * N_fine)
    d = as_discrete(ProblemData(1, spec.l, controls={0: [control]}, known_F={0: [F_star]},
                                overdet={0: [Overdetermination(omega, 0.0)]}), g)
    f = d.h0.copy()
    f[:, 0, :] += d.known_F[0][0][:, None] * d.controls[0][0]
    traj = solve_linear_forward(spec, d.u0, d.mu, d.nu, SourceBundle(f, None), g)
    from oddinverse.functionals import q_functional

    q = q_functional(traj, 0, omega, g).values
    dq = np.gradient(q, g.dt, edge_order=2)
    phi = lambda t: np.interp(t, g.t, q)
    dphi = lambda t: np.interp(t, g.t, dq)
    return ProblemData(1, spec.l, controls={0: [control]}, overdet={0: [Overdetermination(omega, phi, dphi)]})


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
