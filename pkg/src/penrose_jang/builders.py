"""Closed-form initial data sets used by the scenario registry.

Expressions are written in sympy so that every derivative sample handed to
:class:`SphericalInitialData` is exact.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

from .radial_core import RadialGrid, SphericalInitialData

r = sp.Symbol("r", positive=True)


def _fn(expr):
    f = sp.lambdify(r, expr, modules="numpy")

    def call(x):
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(f(x), dtype=float), np.shape(x))
    return call


def from_sympy(grid, a, rho, kr=0, kt=0, mass_hint=None, label=""):
    a, rho, kr, kt = map(sp.sympify, (a, rho, kr, kt))
    return SphericalInitialData.from_functions(
        grid,
        a=tuple(_fn(sp.diff(a, r, k)) for k in range(3)),
        rho=tuple(_fn(sp.diff(rho, r, k)) for k in range(3)),
        kr=tuple(_fn(sp.diff(kr, r, k)) for k in range(2)),
        kt=tuple(_fn(sp.diff(kt, r, k)) for k in range(2)),
        mass_hint=mass_hint, label=label)


def schwarzschild_expressions(m):
    psi = 1 + sp.Rational(1, 2) * sp.nsimplify(m) / r
    return psi**2, psi**2 * r


def schwarzschild_isotropic(m=1.0, n=4096, r_max=200.0, first_step=None):
    """t = 0 slice of Schwarzschild in isotropic coordinates, r in [m/2, r_max]."""
    grid = RadialGrid.geometric(0.5 * m, r_max, n, first_step)
    a, rho = schwarzschild_expressions(m)
    return from_sympy(grid, a, rho, mass_hint=float(m), label=f"schwarzschild_isotropic(m={m})")


def flat(r0=1.0, n=4096, r_max=200.0):
    grid = RadialGrid.geometric(r0, r_max, n, 1e-6 * r0)
    return from_sympy(grid, 1, r, mass_hint=0.0, label="flat")


def smoothstep(t):
    """C^3 step from 0 (t <= 0) to 1 (t >= 1)."""
    return sp.Piecewise((0, t <= 0), (t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3), t < 1),
                        (1, True))


def bump(t):
    """C^3 bump supported on [0, 1], peak value 1 at t = 1/2."""
    return sp.Piecewise((0, t <= 0), ((4 * t * (1 - t))**4, t < 1), (0, True))


def dec_bump(m=1.0, shell=(2.0, 8.0), shell_mass=0.3, k_support=(3.0, 7.0), k_amplitude=0.002,
             kr_ratio=-0.5, n=4096, r_max=200.0, first_step=None):
    """Schwarzschild interior, a mass shell, and a compact extrinsic-curvature bump.

    The areal radius keeps its Schwarzschild form; the radial factor is chosen
    so that the Misner-Sharp mass follows ``m + shell_mass * smoothstep`` across
    the shell, which makes the scalar curvature nonnegative there.  The ``k``
    bump sits strictly inside the shell, where that curvature pays for the
    momentum density.  Vacuum with ``k = 0`` below ``shell[0]``, so the horizon
    stays at ``r = m/2``.
    """
    grid = RadialGrid.geometric(0.5 * m, r_max, n, first_step)
    a_s, rho = schwarzschild_expressions(m)
    r1, r2 = map(sp.nsimplify, shell)
    M = m + sp.nsimplify(shell_mass) * smoothstep((r - r1) / (r2 - r1))
    # a = rho' / sqrt(1 - 2M/rho), written relative to the vacuum value to stay exact inside
    ratio = sp.sqrt((1 - 2 * sp.nsimplify(m) / rho) / (1 - 2 * M / rho))
    a = sp.Piecewise((a_s, r <= r1), (a_s * ratio, True))
    k1, k2 = map(sp.nsimplify, k_support)
    kt = sp.nsimplify(k_amplitude) * bump((r - k1) / (k2 - k1))
    kr = sp.nsimplify(kr_ratio) * kt
    return from_sympy(grid, a, rho, kr, kt, mass_hint=float(m + shell_mass),
                      label=f"dec_bump(m={m})")
