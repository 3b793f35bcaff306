import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from penrose_jang import builders
from penrose_jang.builders import r as R
from penrose_jang.errors import AsymptoticMismatch, InvalidData, NoHorizon
from penrose_jang.radial_core import (RadialGrid, SphericalInitialData, adm_energy,
                                      adm_energy_estimates, adm_momentum, constraint_densities,
                                      dec_check, find_outermost_horizon, null_expansions,
                                      richardson_limit, scalar_curvature, tail_integral)


def _lambdas(*exprs):
    return [builders._fn(e) for e in exprs]


# curvature and constraints against the Cartesian oracle


@pytest.mark.parametrize("point", [(0.6, -1.1, 0.9), (2.0, 0.5, -0.3), (0.1, 3.2, 1.7)])
def test_constraints_match_cartesian_oracle(point):
    a = 1 + sp.Rational(3, 10) * sp.exp(-(R - 2)**2)
    rho = R + sp.Rational(1, 5) * sp.sin(R)
    kr = sp.Rational(1, 10) * sp.exp(-R)
    kt = sp.Rational(1, 20) / (1 + R**2)
    fa, frho, fkr, fkt = _lambdas(a, rho, kr, kt)
    g = oracles.cartesian_metric(fa, frho)
    k = oracles.cartesian_k(fa, frho, fkr, fkt)
    data = builders.from_sympy(RadialGrid.geometric(0.5, 50, 2048), a, rho, kr, kt)
    x = np.array(point)
    r0 = np.array([np.linalg.norm(x)])
    mu, J = oracles.constraints(g, k, x)
    dens = constraint_densities(data, r0)
    assert scalar_curvature(data, r0)[0] == pytest.approx(oracles.scalar_curvature(g, x), rel=1e-6)
    assert dens.mu[0] == pytest.approx(mu, rel=1e-6)
    np.testing.assert_allclose(dens.J_r[0] * x / r0[0], J, rtol=1e-6, atol=1e-12)


def test_schwarzschild_is_vacuum(schw):
    assert np.max(np.abs(scalar_curvature(schw))) < 1e-8
    d = constraint_densities(schw)
    assert np.max(np.abs(d.mu)) < 1e-9
    assert np.all(d.J_r == 0)


def test_flat_slice_scalar_curvature_zero():
    data = builders.flat()
    assert np.max(np.abs(scalar_curvature(data))) < 1e-12


def test_interpolated_profile_between_nodes(schw):
    """Between nodes the interpolant reproduces the closed form and its derivatives."""
    rr = 0.5 * (schw.grid.nodes[1:] + schw.grid.nodes[:-1])[::37]
    v = schw.at(rr)
    psi = 1 + 0.5 / rr
    np.testing.assert_allclose(v.rho, psi**2 * rr, rtol=1e-12)
    np.testing.assert_allclose(v.rho1, 1 - 0.25 / rr**2, atol=1e-9)
    np.testing.assert_allclose(v.rho2, 0.5 / rr**3, rtol=1e-6)
    np.testing.assert_allclose(v.a1, -psi / rr**2 * 2 * 0.5, rtol=1e-8)


def test_at_scalar_matches_vector_evaluation(bump):
    rr = np.array([0.5, 0.5000001, 1.3, 4.4, 199.0])
    vec = bump.at(rr)
    for i, s in enumerate(rr):
        np.testing.assert_allclose(bump.at_scalar(s), [getattr(vec, c)[i] for c in
                                   ("a", "a1", "a2", "rho", "rho1", "rho2", "kr", "kr1", "kt", "kt1")],
                                   rtol=1e-13, atol=1e-15)


# validation


def test_grid_validation():
    with pytest.raises(InvalidData):
        RadialGrid(np.linspace(1, 2, 40))
    with pytest.raises(InvalidData):
        RadialGrid(np.linspace(1, 100, 5))
    with pytest.raises(InvalidData):
        RadialGrid(np.array([1.0, 3.0, 2.0] + list(range(4, 40))))


def test_nonpositive_metric_rejected():
    grid = RadialGrid.uniform(1, 100, 64)
    with pytest.raises(InvalidData):
        SphericalInitialData.from_samples(grid, -np.ones(65), grid.nodes)


def test_slow_falloff_rejected():
    grid = RadialGrid.geometric(1, 400, 1024)
    data = builders.from_sympy(grid, 1, R, kt=sp.Rational(1, 10) / sp.sqrt(R))
    with pytest.raises(InvalidData):
        adm_energy(data)


def test_adm_estimators_must_agree():
    data = builders.schwarzschild_isotropic(1.0, n=1024)
    with pytest.raises(AsymptoticMismatch):
        adm_energy(data, tol=0.0)


# DEC


def test_dec_bump_satisfies_dec(bump):
    res = dec_check(constraint_densities(bump))
    assert res.holds
    d = constraint_densities(bump)
    assert np.max(np.abs(d.J_r)) > 0


def test_dec_detects_violation():
    grid = RadialGrid.geometric(1, 200, 1024)
    data = builders.from_sympy(grid, 1, R, kt=sp.Rational(1, 10) * builders.bump((R - 3) / 4))
    res = dec_check(constraint_densities(data))
    assert not res.holds
    assert 3 < res.worst_radius < 7


# horizons


def test_schwarzschild_horizon(schw, schw_horizon):
    assert schw_horizon.r_h == pytest.approx(0.5, rel=1e-12)
    assert schw_horizon.area == pytest.approx(16 * math.pi, rel=1e-12)
    assert schw_horizon.outermost


def test_horizon_scales_with_mass():
    for m in (0.5, 2.0):
        h = find_outermost_horizon(builders.schwarzschild_isotropic(m, n=1024))
        assert h.r_h == pytest.approx(m / 2, rel=1e-12)
        assert h.area == pytest.approx(16 * math.pi * m**2, rel=1e-12)


def test_flat_has_no_horizon():
    with pytest.raises(NoHorizon) as exc:
        find_outermost_horizon(builders.flat())
    assert exc.value.stage == "radial_core"


def test_expansions_positive_outside_horizon(schw, schw_horizon):
    tp, tm = null_expansions(schw)
    outside = schw.grid.nodes > schw_horizon.r_h
    assert np.all(tp[outside] > 0) and np.all(tm[outside] > 0)


# ADM energy


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_adm_energy_schwarzschild(m):
    data = builders.schwarzschild_isotropic(m, n=2048)
    quasi, flux = adm_energy_estimates(data)
    assert quasi == pytest.approx(m, abs=1e-9)
    assert flux == pytest.approx(m, abs=1e-6)


def test_adm_energy_dec_bump(bump):
    assert adm_energy(bump) == pytest.approx(1.3, abs=1e-6)


def test_adm_momentum_vanishes(bump):
    assert np.all(adm_momentum(bump) == 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_richardson_recovers_limit(coef):
    r = np.geomspace(1, 500, 400)
    vals = coef[0] + coef[1] / r + coef[2] / r**2
    assert richardson_limit(r, vals) == pytest.approx(coef[0], abs=1e-9)


def test_tail_integral_closed_form():
    r = np.geomspace(1, 100, 500)
    assert tail_integral(r, 1 / r**2) == pytest.approx(1 / 100, rel=1e-12)
    assert tail_integral(r, 1 / r**3) == pytest.approx(0.5 / 100**2, rel=1e-10)
