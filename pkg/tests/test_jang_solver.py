import math
from types import SimpleNamespace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from penrose_jang import builders
from penrose_jang import jang_solver as js
from penrose_jang.builders import r as R
from penrose_jang.errors import InvalidData
from penrose_jang.radial_core import (HorizonRecord, RadialGrid, adm_energy, adm_tolerance,
                                      constraint_densities)


@pytest.fixture(scope="module")
def bumped_schwarzschild():
    """Schwarzschild metric with a compact k bump (no DEC requirement for the operator test)."""
    grid = RadialGrid.geometric(0.5, 50, 2048)
    psi = 1 + sp.Rational(1, 2) / R
    kt = sp.Rational(1, 10) * builders.bump((R - 1) / 3)
    kr = -sp.Rational(1, 5) * builders.bump((R - sp.Rational(3, 2)) / 2)
    exprs = (psi**2, psi**2 * R, kr, kt)
    return builders.from_sympy(grid, *exprs), exprs


# the radial operator


def test_residual_zero_graph_no_k(schw):
    rr = schw.grid.nodes[::50]
    z = np.zeros_like(rr)
    assert np.all(js.jang_residual(schw, rr, z, z) == 0)


def test_residual_constant_graph_is_minus_trace(bump):
    rr = bump.grid.nodes[::7]
    z = np.zeros_like(rr)
    v = bump.at(rr)
    np.testing.assert_allclose(js.jang_residual(bump, rr, z, z), -(v.kr + 2 * v.kt), atol=1e-15)


@settings(max_examples=12, deadline=None)
@given(amp=st.floats(0.05, 1.0), freq=st.floats(0.3, 2.0), slope=st.floats(-0.5, 0.5),
       r0=st.floats(0.7, 4.0), cos_t=st.floats(-1, 1), phi=st.floats(0, 2 * math.pi))
def test_residual_matches_cartesian_oracle(bumped_schwarzschild, amp, freq, slope, r0, cos_t, phi):
    data, exprs = bumped_schwarzschild
    sin_t = math.sqrt(1 - cos_t**2)
    x = r0 * np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t])
    f = amp * sp.sin(freq * R) + slope * R
    fn, fp, fpp = (builders._fn(sp.diff(f, R, k)) for k in range(3))
    fa, frho, fkr, fkt = (builders._fn(e) for e in exprs)
    g = oracles.cartesian_metric(fa, frho)
    k = oracles.cartesian_k(fa, frho, fkr, fkt)
    expected = oracles.jang_operator(g, k, lambda y: fn(np.linalg.norm(y)), x)
    rr = np.array([r0])
    got = js.jang_residual(data, rr, fp(rr), fpp(rr))[0]
    assert got == pytest.approx(expected, rel=1e-6, abs=1e-7)


# the blow-up solution


def test_schwarzschild_blowup_shape(schw_jang):
    g = schw_jang.grid
    assert g.beta[0] == pytest.approx(-1.0, abs=1e-12)
    # |beta| < 1 is carried by eps = 1 - |beta|, which is far below rounding of beta near r_h
    assert np.all(g.eps > 0) and np.all(g.eps < 1)
    assert np.all(np.diff(g.f) < 0)
    assert g.f[-1] == 0.0
    assert schw_jang.max_height > 40
    assert schw_jang.residual_max < js.TOL_JANG


def test_schwarzschild_slope_closed_form(schw_jang):
    """On the time-symmetric slice the blow-up slope is -(2m/rho)^2."""
    g = schw_jang.grid
    np.testing.assert_allclose(g.beta, -(2.0 / g.v.rho)**2, rtol=1e-6, atol=1e-12)


def test_jang_metric_invariants(schw_jang, bump_jang):
    for sol in (schw_jang, bump_jang):
        g = sol.grid
        assert np.all(g.b >= g.v.a)
        np.testing.assert_allclose(g.b**2, g.v.a**2 + g.fp**2, rtol=1e-10)


def test_startup_sweep_insensitive(schw_jang, bump_jang):
    for sol in (schw_jang, bump_jang):
        assert set(sol.sweep["relative_change"]) == set(js.SWEEP_OFFSETS)
        assert sol.sweep["max"] < js.SWEEP_TOL


def test_jang_energy_equals_data_energy(schw, schw_jang, bump, bump_jang):
    for data, sol in ((schw, schw_jang), (bump, bump_jang)):
        assert js.jang_energy(sol) == pytest.approx(adm_energy(data),
                                                   abs=adm_tolerance(data.grid.r_max))


def test_bump_free_region_is_minimal(bump_jang):
    g = bump_jang.grid
    outside = (g.r < 2.9) | (g.r > 7.1)
    assert np.all(g.v.kr[outside] == 0) and np.all(g.v.kt[outside] == 0)
    fpp = js.fd_derivative(np.log(g.x), g.fp) / g.x
    H = js.jang_residual(bump_jang.data, g.r, g.fp, fpp)
    assert np.max(np.abs(H[outside])) < js.TOL_JANG


def test_cylinder_length_diverges(schw_jang):
    lengths = [js.graph_length(schw_jang, e * schw_jang.r_h) for e in (1e-6, 1e-8, 1e-10)]
    assert lengths[0] < lengths[1] < lengths[2]
    # logarithmic growth: each two decades add the same length
    assert lengths[2] - lengths[1] == pytest.approx(lengths[1] - lengths[0], rel=0.05)


def test_decay_envelope(schw_jang):
    g = schw_jang.grid
    outer = g.r >= g.r[-1] / 10
    assert np.max(np.sqrt(g.r[outer]) * np.abs(g.f[outer])) == pytest.approx(schw_jang.decay_K)
    assert math.isfinite(schw_jang.decay_K)


def test_inner_horizon_rejected(schw):
    rec = HorizonRecord(0.5, "future", 16 * math.pi, outermost=False)
    with pytest.raises(InvalidData):
        js.solve_jang_blowup(schw, rec)


# curvature identity


def test_identity_residual_small(schw_jang, bump_jang):
    for sol in (schw_jang, bump_jang):
        direct, ident = js.jang_scalar_curvature(sol)
        e = direct - ident
        x = sol.grid_x
        assert math.sqrt(np.trapezoid(e**2 * x, np.log(x))) < 1e-5


def test_identity_on_cylinder_limit(schw_jang):
    """Close to the horizon the Jang metric is a round cylinder of radius 2m."""
    assert schw_jang.grid.Rbar[0] == pytest.approx(2 / 4.0, rel=1e-6)


def test_identity_zero_graph_vacuum(schw):
    x = np.geomspace(1e-3, 150, 600)
    g = js._fields(schw, 0.5, 1, x, np.ones_like(x), np.zeros_like(x))
    assert np.all(g.beta == 0) and np.all(g.q_r == 0)
    ident = js.identity_rhs(g, constraint_densities(schw, g.r))
    assert np.max(np.abs(ident)) < 1e-7
    assert np.max(np.abs(g.Rbar)) < 1e-8


def test_identity_with_matter_and_flat_graph(bump):
    x = np.geomspace(1.0, 150, 800)
    g = js._fields(bump, 0.5, 1, x, np.ones_like(x), np.zeros_like(x))
    assert np.all(g.beta == 0)
    dens = constraint_densities(bump, g.r)
    expected = 16 * math.pi * dens.mu + g.hk_norm2 + 2 * g.q_norm2
    np.testing.assert_allclose(js.identity_rhs(g, dens), expected, atol=1e-14)


# level-set defect and the constant C


def test_defect_where_graph_is_flat(bump):
    x = np.geomspace(1.0, 150, 50)
    g = js._fields(bump, 0.5, 1, x, np.ones_like(x), np.zeros_like(x))
    assert np.all(g.qN == 0)
    np.testing.assert_array_equal(g.defect, g.Hbar)


def test_defect_on_schwarzschild_tends_to_half(schw_jang):
    """Measured, not the vanishing limit one might expect: Hbar -> 0 but q(N) -> -1/(2m)."""
    d = js.defect_at_heights(schw_jang, [10, 20, 40])
    np.testing.assert_allclose(d, 0.5, atol=1e-4)
    g = schw_jang.fields(schw_jang.x_at_height(40))
    assert abs(g.Hbar[0]) < 1e-8


class _DefectMock:
    def __init__(self, c):
        self.c = c

    def x_at_height(self, T):
        return T

    def fields(self, x):
        return SimpleNamespace(defect=self.c / np.asarray(x))


def test_estimate_C_exact_inverse_law():
    assert js.estimate_C(_DefectMock(3.5), [5, 10, 20, 40]) == pytest.approx(3.5)


def test_estimate_C_zero_defect():
    assert js.estimate_C(_DefectMock(0.0), [5, 10, 20]) == 0.0


def test_estimate_C_needs_three_heights():
    with pytest.raises(ValueError):
        js.estimate_C(_DefectMock(1.0), [5, 10])


def test_estimate_C_grows_with_height_on_schwarzschild(schw_jang):
    """With a non-decaying defect the estimate tracks the largest height instead of settling."""
    c1 = js.estimate_C(schw_jang, [5, 10, 20])
    c2 = js.estimate_C(schw_jang, [5, 10, 20, 40])
    assert c1 == pytest.approx(10, rel=1e-3)
    assert c2 == pytest.approx(20, rel=1e-3)


def test_height_root(schw_jang):
    for T in (5, 10, 20, 40):
        x = schw_jang.x_at_height(T)
        assert abs(schw_jang.height(x)[0]) == pytest.approx(T, rel=1e-12)


def test_profile_table_columns(schw_jang):
    t = schw_jang.table()
    assert set(t) == {"r", "x", "beta", "f", "b", "Rbar_direct", "Rbar_identity", "defect"}
    assert all(len(v) == len(schw_jang.grid_x) for v in t.values())
