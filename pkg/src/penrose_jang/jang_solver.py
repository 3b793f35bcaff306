"""Blow-up solutions of Jang's equation in spherical symmetry.

With ``f = f(r)`` and ``beta = (f'/a) / sqrt(1 + (f'/a)^2)`` Jang's equation
reduces to the first-order equation

    beta'/a + H beta = kr (1 - beta^2) + 2 kt,        H = 2 rho' / (a rho).

A future horizon (theta_+ = 0) is where the graph climbs to ``f = +inf``; there
``beta -> -1``.  Writing ``beta = -s (1 - eps)`` with ``s = +1`` (future) or
``s = -1`` (past) gives

    eps' = a (theta_s - H eps + s kr (2 - eps) eps),

which is regular at the horizon, with ``eps ~ a theta_s'(r_h) x^2 / 2`` for
``x = r - r_h``.  It is integrated in ``t = log x`` for ``eta = log eps``, so
that the cylindrical end (``f ~ -log x``) keeps full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BlowupEscape, CapOutOfRange, DecayViolation, InvalidData, JangResidualError
from .radial_core import (ProfileValues, constraint_densities, curvature_from_metric,
                          expansion, fd_derivative, outer_decade)

TOL_JANG = 1e-6
START_OFFSET = 1e-11
SWEEP_OFFSETS = (1e-4, 1e-5, 1e-6)
SWEEP_TOL = 1e-4
RTOL = 1e-10
SWEEP_RTOL = 1e-9


# ----------------------------------------------------------------- equation itself


def jang_residual(data, r, fp, fpp):
    """Radial reduction of the Jang operator for a profile with derivatives ``fp``, ``fpp``."""
    v = data.at(r)
    fa = np.asarray(fp) / v.a
    w2 = 1.0 + fa**2
    w = np.sqrt(w2)
    beta = fa / w
    dbeta = (np.asarray(fpp) / v.a - np.asarray(fp) * v.a1 / v.a**2) / (w2 * w)
    H = 2.0 * v.rho1 / (v.a * v.rho)
    return dbeta / v.a + H * beta - v.kr / w2 - 2.0 * v.kt


# ------------------------------------------------------------------ pointwise fields


@dataclass(frozen=True, eq=False)
class JangFields:
    """Jang-surface geometry at a set of points ``r = r_h + x``."""
    x: np.ndarray
    v: ProfileValues
    eps: np.ndarray          # 1 - |beta|
    deps: np.ndarray         # d eps / dr
    f: np.ndarray
    sign: int

    @property
    def r(self):
        return self.v.r

    @property
    def beta(self):
        return -self.sign * (1.0 - self.eps)

    @property
    def dbeta(self):
        return self.sign * self.deps

    @property
    def one_minus_beta2(self):
        return self.eps * (2.0 - self.eps)

    @property
    def fp(self):
        return self.v.a * self.beta / np.sqrt(self.one_minus_beta2)

    @property
    def b(self):
        """Radial factor of the Jang metric ``b^2 dr^2 + rho^2 dOmega^2``."""
        return self.v.a / np.sqrt(self.one_minus_beta2)

    @property
    def b1(self):
        s = self.one_minus_beta2
        return self.v.a1 / np.sqrt(s) - self.v.a * (1.0 - self.eps) * self.deps / (s * np.sqrt(s))

    @property
    def H(self):
        return 2.0 * self.v.rho1 / (self.v.a * self.v.rho)

    @property
    def hbar_rr(self):
        """Mixed radial component of the graph's second fundamental form."""
        return self.dbeta / self.v.a

    @property
    def hbar_tt(self):
        return 0.5 * self.H * self.beta

    @property
    def q_r(self):
        v = self.v
        return (self.beta / v.a) * (self.b**2 * self.dbeta / v.a - v.a**2 * v.kr)

    @property
    def q_norm2(self):
        return (self.q_r / self.b)**2

    @property
    def hk_norm2(self):
        v = self.v
        return (self.hbar_rr - v.kr * self.one_minus_beta2)**2 + 2.0 * (self.hbar_tt - v.kt)**2

    @property
    def Hbar(self):
        """Mean curvature of the level sphere in the Jang metric, normal toward infinity."""
        return 2.0 * self.v.rho1 / (self.b * self.v.rho)

    @property
    def qN(self):
        return self.q_r / self.b

    @property
    def defect(self):
        return self.Hbar - self.qN

    @property
    def Rbar(self):
        v = self.v
        return curvature_from_metric(self.b, self.b1, v.rho, v.rho1, v.rho2)


def _fields(data, r_h, sign, x, eps, f):
    x = np.asarray(x, float)
    v = data.at(r_h + x)
    H = 2.0 * v.rho1 / (v.a * v.rho)
    theta = H + 2.0 * sign * v.kt
    deps = v.a * (theta - H * eps + sign * v.kr * (2.0 - eps) * eps)
    return JangFields(x, v, eps, deps, f, sign)


# ------------------------------------------------------------------------- solver


def _theta_slope(data, r_h, sign):
    v = data.at(np.array([r_h]))
    ar = v.a * v.rho
    d = (2 * v.rho2 / ar - 2 * v.rho1 * (v.a1 * v.rho + v.a * v.rho1) / ar**2
         + 2 * sign * v.kt1)
    return float(d[0]), float(v.a[0])


def _integrate(data, r_h, sign, x_start, rtol=RTOL):
    slope, a_h = _theta_slope(data, r_h, sign)
    if not slope > 0:
        raise InvalidData(f"degenerate horizon at r={r_h}: d theta/dr = {slope}")
    x_end = data.grid.r_max - r_h
    interp = data.at_scalar
    s = float(sign)

    def rhs(t, y):
        x = math.exp(t)
        a, _, _, rho, rho1, _, kr, _, kt, _ = interp(r_h + x)
        eps = math.exp(y[0])
        H = 2.0 * rho1 / (a * rho)
        theta = H + 2.0 * s * kt
        deta = x * a * (theta / eps - H + s * kr * (2.0 - eps))
        # trial stages may overshoot; the escape event handles genuine escapes
        dfdt = -s * x * a * (1.0 - eps) / math.sqrt(max(eps * (2.0 - eps), 1e-300))
        return [deta, dfdt]

    def escape_high(t, y):
        return (2.0 - 1e-10) - math.exp(y[0])
    escape_high.terminal = True

    def escape_low(t, y):
        if math.exp(t) < 1e-3 * r_h:
            return 1.0
        return y[0] - math.log(1e-12)
    escape_low.terminal = True

    eps0 = 0.5 * a_h * slope * x_start**2
    sol = solve_ivp(rhs, (math.log(x_start), math.log(x_end)), [math.log(eps0), 0.0],
                    method="DOP853", rtol=rtol, atol=rtol, dense_output=True,
                    events=(escape_high, escape_low))
    if sol.status == 1:
        raise BlowupEscape(f"|beta| reached 1 away from the horizon near r = {r_h + math.exp(sol.t[-1])}")
    if sol.status != 0:
        raise BlowupEscape(f"integration failed: {sol.message}")
    return sol


@dataclass(eq=False)
class JangSolution:
    data: object
    horizon: object
    sign: int
    x_start: float
    grid_x: np.ndarray
    ode: object = field(repr=False)
    f_end: float
    grid: JangFields = field(repr=False)
    Rbar_identity: np.ndarray = field(repr=False)
    residual_max: float = 0.0
    decay_K: float = 0.0
    tail_estimate: float = 0.0
    sweep: dict = field(default_factory=dict)

    @property
    def r_h(self):
        return self.horizon.r_h

    @property
    def Rbar_direct(self):
        return self.grid.Rbar

    def fields(self, x):
        """Jang geometry at offsets ``x = r - r_h`` (any x in the solved range)."""
        x = np.atleast_1d(np.asarray(x, float))
        eta, f = self.ode.sol(np.log(x))
        return _fields(self.data, self.r_h, self.sign, x, np.exp(eta), f - self.f_end)

    def height(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        return self.ode.sol(np.log(x))[1] - self.f_end

    @property
    def max_height(self):
        return float(abs(self.height(self.grid_x[0])[0]))

    def x_at_height(self, T):
        """Offset where ``|f| = T`` on the blow-up end."""
        h = np.abs(self.height(self.grid_x))
        if not 0 < T < h[0]:
            raise CapOutOfRange(f"height {T} outside (0, {h[0]:.6g}) reached on the grid")
        idx = np.flatnonzero(h <= T)[0]
        t_lo, t_hi = math.log(self.grid_x[idx - 1]), math.log(self.grid_x[idx])
        t = brentq(lambda s: abs(self.height(math.exp(s))[0]) - T, t_lo, t_hi,
                   xtol=1e-14, rtol=4 * np.finfo(float).eps)
        return math.exp(t)

    def table(self):
        g = self.grid
        return {"r": g.r, "x": g.x, "beta": g.beta, "f": g.f, "b": g.b,
                "Rbar_direct": g.Rbar, "Rbar_identity": self.Rbar_identity, "defect": g.defect}


def identity_rhs(fields, densities):
    """Right-hand side of the Jang scalar-curvature identity, divergence by finite differences."""
    g = fields
    v = g.v
    Jw = densities.J_r * g.beta / v.a
    flux = v.rho**2 * g.q_r / g.b
    div_q = np.gradient(flux, g.x, edge_order=2) / (g.b * v.rho**2)
    return 16 * math.pi * (densities.mu - Jw) + g.hk_norm2 + 2 * g.q_norm2 - 2 * div_q


def _decay_envelope(r, f, fp):
    outer = outer_decade(r)
    prev = (r >= r[-1] / 100.0) & ~outer
    K = float(np.max(np.sqrt(r[outer]) * np.abs(f[outer])))
    d_outer = float(np.max(r[outer]**1.5 * np.abs(fp[outer])))
    d_prev = float(np.max(r[prev]**1.5 * np.abs(fp[prev]))) if prev.sum() > 2 else None
    return K, d_outer, d_prev


def _outermost_check(data, r_h):
    nodes = data.grid.nodes
    outside = nodes > r_h
    for kind in ("future", "past"):
        th = expansion(data, kind)[outside]
        if np.any(th <= 0):
            bad = nodes[outside][np.argmin(th)]
            raise InvalidData(f"another {kind} horizon candidate outside r_h at r = {bad}")


def solve_jang_blowup(data, horizon, n=None, x_start=None, sweep=True):
    """Outward shooting from the horizon; ``f`` normalized to vanish at r_max."""
    if not horizon.outermost:
        raise InvalidData("Jang blow-up requires the outermost horizon")
    _outermost_check(data, horizon.r_h)
    r_h, sign = horizon.r_h, horizon.sign
    x_start = START_OFFSET * r_h if x_start is None else x_start
    ode = _integrate(data, r_h, sign, x_start)
    f_end = float(ode.y[1, -1])
    n = data.grid.n if n is None else n
    x_end = data.grid.r_max - r_h
    gx = np.geomspace(10.0 * x_start, x_end, n + 1)
    gx[-1] = x_end
    eta, f = ode.sol(np.log(gx))
    g = _fields(data, r_h, sign, gx, np.exp(eta), f - f_end)
    dens = constraint_densities(data, g.r)
    Rid = identity_rhs(g, dens)

    # Jang residual with f'' from 4th-order differences of f' along log x
    fp = g.fp
    fpp = fd_derivative(np.log(gx), fp) / gx
    res = np.abs(jang_residual(data, g.r, fp, fpp))
    residual_max = float(res.max())
    if residual_max > TOL_JANG:
        raise JangResidualError(f"Jang residual {residual_max:.3g} exceeds {TOL_JANG}")

    K, d_outer, d_prev = _decay_envelope(g.r, g.f, fp)
    if d_prev is not None and d_outer > 2.0 * d_prev:
        raise DecayViolation(f"r^(3/2)|f'| grows across the outer decade ({d_prev:.3g} -> {d_outer:.3g})")

    sol = JangSolution(data, horizon, sign, x_start, gx, ode, f_end, g, Rid, residual_max, K,
                       K / math.sqrt(data.grid.r_max))
    if sweep:
        sol.sweep = startup_sweep(sol)
    return sol


def startup_sweep(sol, offsets=SWEEP_OFFSETS, tol=SWEEP_TOL):
    """Re-shoot from larger startup offsets and compare the outer solution."""
    outer = sol.grid_x >= 1e-3 * sol.r_h
    x = sol.grid_x[outer]
    ref = sol.fields(x)
    changes = {}
    for off in offsets:
        ode = _integrate(sol.data, sol.r_h, sol.sign, off * sol.r_h, SWEEP_RTOL)
        eta, f = ode.sol(np.log(x))
        f = f - ode.y[1, -1]
        beta = -sol.sign * (1.0 - np.exp(eta))
        d_beta = np.max(np.abs(beta - ref.beta)) / np.max(np.abs(ref.beta))
        d_f = np.max(np.abs(f - ref.f)) / np.max(np.abs(ref.f))
        changes[off] = float(max(d_beta, d_f))
    worst = max(changes.values())
    if worst >= tol:
        raise BlowupEscape(f"outer Jang solution depends on the startup offset ({worst:.3g})")
    return {"relative_change": changes, "max": worst, "tol": tol}


# ------------------------------------------------------------------- diagnostics


def jang_scalar_curvature(sol, densities=None):
    """``(Rbar_direct, Rbar_identity)`` on the solution grid."""
    if densities is None:
        densities = constraint_densities(sol.data, sol.grid.r)
    return sol.grid.Rbar, identity_rhs(sol.grid, densities)


def level_set_defect(sol, r=None, x=None):
    """``Hbar - q(Nbar)`` on the level spheres; pass offsets ``x`` near the horizon."""
    if x is None:
        x = np.asarray(r, float) - sol.r_h
    return sol.fields(x).defect


def defect_at_heights(sol, heights):
    xs = np.array([sol.x_at_height(T) for T in heights])
    return level_set_defect(sol, x=xs)


def estimate_C(sol, heights):
    heights = np.asarray(heights, float)
    if heights.size < 3:
        raise ValueError("estimate_C needs at least three heights")
    return float(np.max(heights * np.abs(defect_at_heights(sol, heights))))


def defect_decay_slope(sol, heights):
    """Least-squares slope of log|defect| against log T."""
    d = np.abs(defect_at_heights(sol, heights))
    return float(np.polyfit(np.log(heights), np.log(d), 1)[0]), d


def graph_length(sol, x_from):
    """``int b dr`` from ``r_h + x_from`` to r_max (proper length of the Jang graph)."""
    x = sol.grid_x[sol.grid_x >= x_from]
    if x[0] > x_from:
        x = np.concatenate([[x_from], x])
    b = sol.fields(x).b
    return float(np.trapezoid(b * x, np.log(x)))


def jang_energy(sol):
    """ADM energy of the Jang metric, same estimators as for g."""
    from .radial_core import adm_energy
    g = sol.grid
    v = g.v
    vals = ProfileValues(v.r, g.b, g.b1, np.zeros_like(g.b), v.rho, v.rho1, v.rho2,
                         v.kr, v.kr1, v.kt, v.kt1)
    return adm_energy(vals)
