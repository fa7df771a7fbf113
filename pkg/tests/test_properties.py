"""Property-based checks (linearity, Cramer oracle, norm homogeneity)."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from oddinverse import norms
from oddinverse.forward import SourceBundle, solve_linear_forward
from oddinverse.functionals import cramer_quotients, cramer_source_step
from oddinverse.inverse import assemble_source
from oddinverse.model import Grid
from oddinverse.presets import preset

GRID = Grid(1.0, 0.5, 24, 12)
AIRY = preset("airy")
ZMU, ZNU = np.zeros((1, 1, 13)), np.zeros((2, 1, 13))

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_forward_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    shape = (13, 1, 26)
    f1, f2 = rng.normal(size=shape), rng.normal(size=shape)
    u0 = np.zeros((1, 26))
    s1 = solve_linear_forward(AIRY, u0, ZMU, ZNU, SourceBundle(f1, None), GRID).u
    s2 = solve_linear_forward(AIRY, u0, ZMU, ZNU, SourceBundle(f2, None), GRID).u
    s = solve_linear_forward(AIRY, u0, ZMU, ZNU, SourceBundle(a * f1 + b * f2, None), GRID).u
    np.testing.assert_allclose(s, a * s1 + b * s2, atol=1e-10 * (1 + abs(a) + abs(b)) * max(1.0, np.abs(s).max()))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), seeds)
def test_cramer_matches_pivoted(m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, m)) + m * np.eye(m)
    z = rng.normal(size=m)
    np.testing.assert_allclose(cramer_source_step(A, z), cramer_quotients(A, z), rtol=1e-10, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0.01, 100))
def test_norm_homogeneity(seed, lam):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(13, 1, 26))
    a = norms.x_norm(u, GRID.dx, GRID.dt, 1).total
    assert np.isclose(norms.x_norm(lam * u, GRID.dx, GRID.dt, 1).total, lam * a, rtol=1e-12)
    s = rng.normal(size=13)
    assert np.isclose(norms.weighted_l1(lam * s, 2.0, GRID.dt), lam * norms.weighted_l1(s, 2.0, GRID.dt), rtol=1e-12)
    assert np.isclose(norms.gagliardo_seminorm(lam * s, 0.3, GRID.dt), lam * norms.gagliardo_seminorm(s, 0.3, GRID.dt), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_weighted_l1_monotone_in_gamma(seed):
    s = np.random.default_rng(seed).normal(size=40)
    vals = [norms.weighted_l1(s, g, 0.025) for g in (0.0, 1.0, 5.0)]
    assert vals[0] >= vals[1] >= vals[2] >= 0


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_assemble_source_linear_in_F(seed):
    rng = np.random.default_rng(seed)
    h0 = rng.normal(size=(13, 2, 26))
    H = {0: rng.normal(size=(2, 13, 26)), 1: rng.normal(size=(1, 13, 26))}
    F1 = {0: rng.normal(size=(2, 13)), 1: rng.normal(size=(1, 13))}
    F2 = {0: rng.normal(size=(2, 13)), 1: rng.normal(size=(1, 13))}
    both = {i: F1[i] + F2[i] for i in F1}
    lhs = assemble_source(h0, H, both)
    rhs = assemble_source(h0, H, F1) + assemble_source(np.zeros_like(h0), H, F2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
