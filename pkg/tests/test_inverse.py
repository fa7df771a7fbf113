import numpy as np
import pytest

from conftest import twin_problem
from oddinverse.exceptions import CompatibilityError, DegenerateOverdetermination, ValidationRefused
from oddinverse.inverse import (
    assemble_source,
    f_l1_distance,
    solve_linear_inverse,
    solve_nonlinear_inverse,
    stability_probe,
)
from oddinverse.manufactured import generate_manufactured
from oddinverse.model import Grid, Overdetermination, ProblemData, Weight, as_discrete
from oddinverse.norms import l1_norm
from oddinverse.presets import preset

W = Weight.from_expr("x**2*(1-x)", 1.0)


def test_assemble_source_examples():
    g = Grid(1.0, 1.0, 8, 4)
    h0 = np.random.default_rng(0).normal(size=(5, 1, 10))
    H = {0: np.ones((1, 5, 10))}
    np.testing.assert_array_equal(assemble_source(h0, H, {0: np.zeros((1, 5))}), h0)
    f = assemble_source(np.zeros((5, 1, 10)), H, {0: g.t[None, :]})
    np.testing.assert_allclose(f[:, 0, :], np.repeat(g.t[:, None], 10, axis=1))
    F1, F2 = {0: np.sin(g.t)[None]}, {0: g.t[None] ** 2}
    lhs = assemble_source(h0, H, {0: F1[0] + 2 * F2[0]})
    rhs = assemble_source(h0, H, F1) + 2 * assemble_source(np.zeros_like(h0), H, F2)
    np.testing.assert_allclose(lhs, rhs)


def test_forward_generated_zero_source(airy):
    # phi recorded from an F* = 0 run; phi' is the derivative of q along the
    # discrete solution (the identity's r), so the march sees consistent data
    from oddinverse.forward import solve_linear_forward
    from oddinverse.functionals import q_functional, r_functional

    g = Grid(1.0, 1.0, 64, 64)
    u0 = lambda x: 0.1 * np.sin(np.pi * x) ** 2
    d = as_discrete(ProblemData(1, 1, u0=u0), g)
    traj = solve_linear_forward(airy, d.u0, d.mu, d.nu, None, g)
    q = q_functional(traj, 0, W, g).values
    dq = r_functional(airy, traj, d.mu, d.nu, None, 0, W, g).values
    data = ProblemData(1, 1, u0=u0, controls={0: [1.0]}, overdet={0: [Overdetermination(W, q, dq)]})
    res = solve_linear_inverse(airy, data, g)
    assert np.max(np.abs(res.F[0][0])) < 1e-10
    np.testing.assert_allclose(res.trajectory.u, traj.u, atol=1e-12)


def test_twin_converges_and_methods_agree(airy):
    data = twin_problem(airy, np.sin, W, N_fine=512)
    errs = []
    for N in (32, 64, 128):
        g = Grid(1.0, 1.0, N, 2 * N)
        res = solve_linear_inverse(airy, data, g)
        errs.append(l1_norm(res.F[0][0] - np.sin(g.t), g.dt))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates >= 1.5), errs
    pic = solve_linear_inverse(airy, data, g, method="picard")
    assert f_l1_distance(res.F, pic.F, g.dt) < 1e-8
    assert pic.gamma_used > 0 and pic.inner_iters > 1
    assert all(r < 1 for r in pic.sweep_ratios)


def test_picard_fixed_point(airy):
    from oddinverse.inverse import _InverseSetup, apply_A

    data = twin_problem(airy, np.sin, W, N_fine=128)
    g = Grid(1.0, 1.0, 32, 64)
    res = solve_linear_inverse(airy, data, g, method="picard")
    setup = _InverseSetup(airy, as_discrete(data, g), g, None)
    F = res.F[0][0][:, None]
    F_new, _ = apply_A(setup, F)
    assert l1_norm(F_new[:, 0] - F[:, 0], g.dt) < 10 * 1e-11 * (1 + l1_norm(F[:, 0], g.dt))


def test_inverse_refusals(airy):
    g = Grid(1.0, 1.0, 32, 32)
    bad = ProblemData(1, 1, u0=1.0, controls={0: [1.0]}, overdet={0: [Overdetermination(W, 0.0)]})
    with pytest.raises(CompatibilityError):
        solve_linear_inverse(airy, bad, g)
    with pytest.raises(ValidationRefused, match="omega"):
        solve_linear_inverse(airy, ProblemData(1, 1, controls={0: [1.0]}, overdet={0: [Overdetermination(Weight.from_expr("1", 1.0), 0.0)]}), g)
    degenerate = ProblemData(1, 1, controls={0: [lambda t, x: 2 * (1 + x), lambda t, x: 1 + x]},
                             overdet={0: [Overdetermination(W, 0.0), Overdetermination(Weight.from_expr("x**2*(1-x)*(1+x)", 1.0), 0.0)]})
    with pytest.raises(DegenerateOverdetermination):
        solve_linear_inverse(airy, degenerate, g)
    with pytest.raises(ValidationRefused, match="no unknown"):
        solve_linear_inverse(airy, ProblemData(1, 1), g)


@pytest.fixture(scope="module")
def mb_case():
    return generate_manufactured(
        preset("majda_biello", alpha=0.5),
        ["0.1*exp(-t)*sin(pi*x)", "0.1*cos(t)*x*(1-x)*(1+x)"],
        F={0: ["sin(t)"], 1: ["cos(t)"]},
        controls={0: ["1"], 1: ["1"]},
        weights={0: ["x**2*(1-x)"], 1: ["x**2*(1-x)"]},
    )


def test_mb_nonlinear_converges(mb_case):
    mb, data = mb_case.spec, mb_case.problem()
    errs = []
    for N in (32, 64, 128):
        g = Grid(1.0, 1.0, N, N)
        res = solve_nonlinear_inverse(mb, data, g)
        assert res.outer_ratios and all(r < 1 for r in res.outer_ratios)
        errs.append(f_l1_distance(res.F, mb_case.exact_F(g), g.dt))
    assert errs[0] > errs[1] > errs[2]


def test_mb_uniqueness_in_ball(mb_case):
    g = Grid(1.0, 1.0, 48, 48)
    a = solve_nonlinear_inverse(mb_case.spec, mb_case.problem(), g, initial="zero")
    b = solve_nonlinear_inverse(mb_case.spec, mb_case.problem(), g, initial="linear")
    assert f_l1_distance(a.F, b.F, g.dt) < 10 * 1e-8


def test_nonlinear_with_zero_g_is_linear(airy):
    kdv = preset("kdv")
    zero = kdv.with_nonlinearity(kdv.nonlinearity.scaled(0.0))
    data = twin_problem(airy, np.sin, W, N_fine=128)
    g = Grid(1.0, 1.0, 32, 64)
    a = solve_nonlinear_inverse(zero, data, g)
    b = solve_linear_inverse(airy, data, g)
    np.testing.assert_array_equal(a.F[0], b.F[0])


def test_stability_probe_examples():
    case = generate_manufactured(preset("airy"), ["t*x*(2-x)**2*(1+x)/8"], F={0: ["sin(t)"]},
                                 controls={0: ["1"]}, weights={0: ["x**2*(2-x)/4"]}, R=2.0)
    data = case.problem()
    ratios = []
    for N in (32, 64):
        g = Grid(2.0, 1.0, N, N)
        base = solve_linear_inverse(case.spec, data, g)
        assert stability_probe(case.spec, data, g, {0: np.zeros((1, N + 1))}, baseline=base) == 0.0
        shape = np.sin(2 * np.pi * g.t)[None]
        r = [stability_probe(case.spec, data, g, {0: a * shape}, baseline=base) for a in (1e-3, 1e-6)]
        assert r[0] == pytest.approx(r[1], rel=0.01)
        ratios.append(r[0])
    assert np.all(np.isfinite(ratios)) and ratios[1] == pytest.approx(ratios[0], rel=0.1)


@pytest.mark.parametrize("method", ["march", "picard"])
def test_zero_data_exact_zero(method):
    g = Grid(1.0, 1.0, 32, 32)
    data = ProblemData(1, 1, controls={0: [1.0]}, overdet={0: [Overdetermination(W, 0.0)]})
    for spec, solve in ((preset("airy"), solve_linear_inverse), (preset("kdv"), solve_nonlinear_inverse)):
        res = solve(spec, data, g, method=method)
        assert not np.any(res.F[0]) and not np.any(res.trajectory.u)
