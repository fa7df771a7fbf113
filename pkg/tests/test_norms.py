import numpy as np
import pytest

from oddinverse import norms
from oddinverse.model import Grid


def test_l2_norm_examples():
    g = Grid(1.0, 1.0, 255, 4)
    assert norms.l2_norm(np.zeros_like(g.x), g.dx) == 0.0
    assert norms.l2_norm(np.ones_like(g.x), g.dx) == pytest.approx(1.0, abs=1e-12)
    assert norms.l2_norm(np.sin(np.pi * g.x), g.dx) == pytest.approx(np.sqrt(0.5), abs=1e-5)


def test_x_norm_examples():
    g = Grid(1.0, 1.0, 255, 32)
    zero = np.zeros((g.Nt + 1, 1, g.Nx + 2))
    assert norms.x_norm(zero, g.dx, g.dt, 1).total == 0.0
    c = norms.x_norm(zero + 0.7, g.dx, g.dt, 1)
    assert c.sup_l2 == pytest.approx(0.7)
    assert c.dxl_l2 == pytest.approx(0.0, abs=1e-10)
    s = norms.x_norm(zero + np.sin(np.pi * g.x), g.dx, g.dt, 1)
    assert s.sup_l2 == pytest.approx(np.sqrt(0.5), abs=1e-5)
    assert s.dxl_l2 == pytest.approx(np.pi * np.sqrt(0.5), rel=1e-3)


def test_weighted_l1_examples():
    t = np.linspace(0, 1, 1001)
    assert norms.weighted_l1(np.ones_like(t), 1.0, t[1]) == pytest.approx(1 - np.exp(-1), abs=1e-6)
    assert norms.weighted_l1(np.zeros_like(t), 3.0, t[1]) == 0.0
    s = np.sin(5 * t)
    assert norms.weighted_l1(s, 0.0, t[1]) == pytest.approx(norms.l1_norm(s, t[1]))


def _brute_seminorm(f, s, dt):
    # direct double sum over the off-diagonal pairs (midpoint-free oracle)
    t = dt * np.arange(len(f))
    T, S = np.meshgrid(t, t, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (f[:, None] - f[None, :]) ** 2 / np.abs(T - S) ** (1 + 2 * s)
    k[~np.isfinite(k)] = 0.0
    return np.sqrt(np.sum(k) * dt * dt)


def test_gagliardo_examples():
    t = np.linspace(0, 1, 201)
    f = np.cos(3 * t)
    assert norms.frac_sobolev_norm(f, 0.0, t[1]) == pytest.approx(norms.l2_norm(f, t[1]), rel=1e-12)
    assert norms.gagliardo_seminorm(np.full(201, 2.0), 1 / 3, t[1]) == 0.0


def test_gagliardo_linear_function_against_double_sum():
    # f(t) = t, s = 1/3: exact seminorm^2 = int int |t-s|^(1-2s) = 2/((2-2s)(3-2s))
    s = 1.0 / 3.0
    exact = np.sqrt(2.0 / ((2 - 2 * s) * (3 - 2 * s)))
    vals = []
    for n in (200, 400):
        t = np.linspace(0, 1, n + 1)
        vals.append(norms.gagliardo_seminorm(t, s, t[1]))
        assert vals[-1] == pytest.approx(_brute_seminorm(t, s, t[1]), rel=0.05)
    # error shrinks with refinement toward the closed form
    assert abs(vals[1] - exact) < abs(vals[0] - exact)
    assert vals[1] == pytest.approx(exact, rel=0.02)


def test_trace_order_and_boundary_norm():
    assert norms.trace_order(1, 0) == pytest.approx(1 / 3)
    assert norms.trace_order(1, 1) == 0.0
    dt = 0.01
    t = np.arange(101) * dt
    mu = np.zeros((1, 1, 101))
    nu = np.zeros((2, 1, 101))
    assert norms.boundary_norm(mu, nu, 1, dt) == 0.0
    mu[0, 0] = np.sin(t)
    nu[1, 0] = t
    base = norms.boundary_norm(mu, nu, 1, dt)
    assert norms.boundary_norm(3 * mu, 3 * nu, 1, dt) == pytest.approx(3 * base)
    # nu_1 with l = 1 is measured in plain L2
    only = np.zeros_like(nu)
    only[1, 0] = t
    assert norms.boundary_norm(np.zeros_like(mu), only, 1, dt) == pytest.approx(norms.l2_norm(t, dt))
