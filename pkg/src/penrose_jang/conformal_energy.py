"""Capping the Jang surface, the conformal boundary-value problem, and energy bounds.

The conformal problem is discretized as a vertex-centred finite-volume scheme
(equivalently lumped P1 elements) on the nodes of the Jang solution.  The
discrete system is the exact Euler-Lagrange system of the discrete functional
:func:`q_functional`, so the computed ``v_T`` is its exact minimizer and
``2 Q(v_T)`` equals the discrete flux at infinity identically.  The flux that is
reported is extracted independently from difference quotients on the outer
decade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import (BoundViolation, CapOutOfRange, DegenerateDenominator, InvalidData,
                     NonPositive, SolveFailure)
from .radial_core import constraint_densities, richardson_limit, tail_integral

TOL_CONSISTENCY = 1e-3
FIXED_POINT_TOL = 1e-10


def tol_energy(E_g):
    return 1e-3 * max(E_g, 1.0)


# --------------------------------------------------------------------------- caps


@dataclass(frozen=True)
class CappedSurface:
    T: float
    x_T: float
    r_T: float
    boundary_area: float
    Hbar_boundary: float
    defect: float

    @property
    def gamma(self):
        """Measured boundary factor ``sqrt(A/pi) |Hbar - q(N)| / 4`` (replaces C/T)."""
        return 0.25 * math.sqrt(self.boundary_area / math.pi) * abs(self.defect)


def cap_surface(sol, T):
    x_T = sol.x_at_height(T)
    g = sol.fields(x_T)
    return CappedSurface(float(T), x_T, sol.r_h + x_T, float(4 * math.pi * g.v.rho[0]**2),
                         float(g.Hbar[0]), float(g.defect[0]))


# ------------------------------------------------------------------- discretization


@dataclass(frozen=True, eq=False)
class CapMesh:
    """Nodes of ``[r_T, r_max]`` with the coefficients of the discrete functional."""
    x: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    b: np.ndarray
    Rbar: np.ndarray
    qN: np.ndarray
    w: np.ndarray          # edge conductances 4 pi rho^2 / (b h)
    cell: np.ndarray       # dual-cell volume 4 pi rho^2 b dr
    tail: float            # conductance of the exterior beyond r_max
    area: float
    Hbar: float

    @property
    def n(self):
        return self.x.size

    @classmethod
    def from_profiles(cls, r, rho, b, Rbar, area, Hbar, qN=None, edge=None):
        """Mesh from node samples; ``edge(rm)`` may supply exact ``(rho, b)`` at edge midpoints."""
        r = np.asarray(r, float)
        rm = 0.5 * (r[1:] + r[:-1])
        rho_m, b_m = edge(rm) if edge else (np.interp(rm, r, rho), np.interp(rm, r, b))
        h = np.diff(r)
        dual = np.zeros_like(r)
        dual[:-1] += 0.5 * h
        dual[1:] += 0.5 * h
        tail = 4 * math.pi / tail_integral(r, b / rho**2)
        qN = np.zeros_like(r) if qN is None else np.asarray(qN, float)
        return cls(r - r[0], r, rho, b, np.asarray(Rbar, float), qN,
                   4 * math.pi * rho_m**2 / (b_m * h), 4 * math.pi * rho**2 * b * dual,
                   float(tail), float(area), float(Hbar))


def cap_mesh(sol, cap):
    gx = sol.grid_x
    keep = gx > cap.x_T * (1.0 + 0.5 * (gx[1] / gx[0] - 1.0))
    x = np.concatenate([[cap.x_T], gx[keep]])
    g = sol.fields(x)
    rho, b, r = g.v.rho, g.b, g.r
    h = np.diff(r)
    # edge coefficients at the log-midpoint, evaluated on the solution itself
    gm = sol.fields(np.sqrt(x[:-1] * x[1:]))
    w = 4 * math.pi * gm.v.rho**2 / (gm.b * h)
    dual = np.zeros_like(r)
    dual[:-1] += 0.5 * h
    dual[1:] += 0.5 * h
    cell = 4 * math.pi * rho**2 * b * dual
    # u harmonic beyond r_max: rho^2 u'/b is constant, so the exterior acts as a
    # conductance 4 pi / int_{r_max}^inf b/rho^2; flat exterior gives (r v)' = 0
    tail = 4 * math.pi / tail_integral(r, b / rho**2)
    return CapMesh(x, r, rho, b, g.Rbar, g.qN, w, cell, float(tail), cap.boundary_area,
                   cap.Hbar_boundary)


def _boundary_coefficient(mesh, area_hat=None, u0=1.0):
    """Coefficient of ``(1 + v_0)^2`` in the functional.

    The boundary condition involves the area in the deformed metric; with
    ``area_hat = u0^4 area`` it is linear in u and the coefficient below is exact.
    """
    area_hat = mesh.area * u0**4 if area_hat is None else area_hat
    robin = 0.25 * math.sqrt(16 * math.pi / area_hat) * u0**2
    return 0.5 * robin * mesh.area - 0.125 * mesh.Hbar * mesh.area


def _hessian(mesh, beta_b):
    """Hessian of the quadratic functional in upper banded form."""
    n = mesh.n
    diag = 0.125 * mesh.Rbar * mesh.cell
    diag[:-1] += mesh.w
    diag[1:] += mesh.w
    diag[0] += 2.0 * beta_b
    diag[-1] += mesh.tail
    ab = np.zeros((2, n))
    ab[0, 1:] = -mesh.w
    ab[1] = diag
    return ab


def q_functional(mesh, v, beta_b=None):
    """Discrete Q: lumped (trapezoidal) volume terms, exact boundary terms, exterior tail."""
    v = np.asarray(v, float)
    beta_b = _boundary_coefficient(mesh) if beta_b is None else beta_b
    u = 1.0 + v
    grad = np.sum(mesh.w * np.diff(v)**2)
    curv = np.sum(0.125 * mesh.Rbar * mesh.cell * u**2)
    return 0.5 * grad + 0.5 * curv + beta_b * u[0]**2 + 0.5 * mesh.tail * v[-1]**2


def dirichlet_energy(mesh, v):
    """``int |grad v|^2`` over the capped surface (discrete)."""
    return float(np.sum(mesh.w * np.diff(v)**2))


# ----------------------------------------------------------------------- BVP solve


@dataclass(eq=False)
class ConformalSolution:
    mesh: CapMesh = field(repr=False)
    u: np.ndarray = field(repr=False)
    alpha: float
    Q_value: float
    flux: float
    flux_discrete: float
    fixed_point_change: float
    coercive: bool

    @property
    def v(self):
        return self.u - 1.0

    @property
    def r(self):
        return self.mesh.r


def _solve(mesh, beta_b):
    ab = _hessian(mesh, beta_b)
    rhs = -0.125 * mesh.Rbar * mesh.cell
    rhs[0] -= 2.0 * beta_b
    try:
        chol = cholesky_banded(ab)
    except LinAlgError:
        return _solve_indefinite(ab, rhs), False
    return cho_solve_banded((chol, False), rhs), True


def _solve_indefinite(ab, rhs):
    from scipy.linalg import solve_banded
    n = ab.shape[1]
    full = np.zeros((3, n))
    full[0, 1:] = ab[0, 1:]
    full[1] = ab[1]
    full[2, :-1] = ab[0, 1:]
    try:
        v = solve_banded((1, 1), full, rhs)
    except LinAlgError as exc:
        raise SolveFailure(f"singular conformal system: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise SolveFailure("conformal system produced non-finite values")
    return v


def solve_conformal_bvp(sol, cap, mesh=None):
    mesh = cap_mesh(sol, cap) if mesh is None else mesh
    beta_b = _boundary_coefficient(mesh)
    v, coercive = _solve(mesh, beta_b)
    u = 1.0 + v
    # confirm the linearization of the area-dependent boundary condition
    beta_fp = _boundary_coefficient(mesh, mesh.area * u[0]**4, u[0])
    v_fp, _ = _solve(mesh, beta_fp)
    change = float(np.max(np.abs(v_fp - v)))
    if change > FIXED_POINT_TOL:
        raise SolveFailure(f"boundary fixed-point pass moved the solution by {change:.3g}")
    if np.any(u <= 0):
        raise NonPositive(f"conformal factor reaches {u.min():.3g} at r = {mesh.r[np.argmin(u)]:.6g}")
    Q = q_functional(mesh, v, beta_b)
    alpha = richardson_limit(mesh.r, mesh.r * v)
    mid = 0.5 * (mesh.r[1:] + mesh.r[:-1])
    flux = richardson_limit(mid, mesh.w * np.diff(v))
    return ConformalSolution(mesh, u, alpha, float(Q), flux, float(-mesh.tail * v[-1]), change,
                             coercive)


def q_lower_bound_check(sol, cap, v, densities=None, mesh=None):
    """``(lhs, rhs)`` of the lower bound for Q obtained from the scalar-curvature identity."""
    mesh = cap_mesh(sol, cap) if mesh is None else mesh
    v = np.asarray(v, float)
    if densities is None:
        densities = constraint_densities(sol.data, mesh.r)
    u = 1.0 + v
    lhs = q_functional(mesh, v)
    interior = 0.375 * dirichlet_energy(mesh, v) + math.pi * np.sum(
        (densities.mu - densities.J_norm) * u**2 * mesh.cell)
    boundary = (0.5 * math.sqrt(math.pi * mesh.area)
                - 0.125 * (mesh.Hbar - mesh.qN[0]) * mesh.area) * u[0]**2
    return float(lhs), float(interior + boundary)


def cylinder_decay_rate(sol, conf):
    """Log-linear slope of ``u`` against height on the upper half of the cylinder."""
    h = np.abs(sol.height(conf.mesh.x))
    T = h[0]
    m = h >= 0.5 * T
    if m.sum() < 3:
        return float("nan")
    return float(np.polyfit(h[m], np.log(conf.u[m]), 1)[0])


# ---------------------------------------------------------------------------- sigmas


def sigma_T(conf, cap, C):
    v0 = conf.v[0]
    if v0 == 0.0:
        raise DegenerateDenominator("boundary value of v_T vanishes")
    factor = 1.0 - C / cap.T
    if factor <= 0.0:
        raise DegenerateDenominator(f"1 - C/T = {factor:.3g} is not positive (C = {C:.6g}, T = {cap.T})")
    return _sigma_from(conf, cap, factor)


def sigma_gamma(conf, cap):
    """Same quotient with the measured boundary factor ``1 - gamma_T`` in place of ``1 - C/T``."""
    factor = 1.0 - cap.gamma
    if factor <= 0.0:
        raise DegenerateDenominator(f"1 - gamma_T = {factor:.3g} is not positive")
    return _sigma_from(conf, cap, factor)


def _sigma_from(conf, cap, factor):
    v0 = conf.v[0]
    if v0 == 0.0:
        raise DegenerateDenominator("boundary value of v_T vanishes")
    num = dirichlet_energy(conf.mesh, conf.v)
    return num / (2.0 * factor * math.sqrt(math.pi / cap.boundary_area) * cap.boundary_area * v0**2)


def bound_from_sigma(sigma, area, factor=1.0):
    return sigma * factor / (2.0 * (1.0 + sigma)) * math.sqrt(area / math.pi)


def _radial_integral(r, integrand):
    return float(np.trapezoid(integrand, r) + tail_integral(r, integrand))


def herzlich_sigma(data, horizon):
    """Normalized Steklov-type quotient of the exterior, closed-form radial minimizer."""
    if not data.time_symmetric:
        raise InvalidData("herzlich_sigma requires time-symmetric data (k = 0)")
    v = data.values
    m = v.r >= horizon.r_h
    r = v.r[m]
    I = _radial_integral(r, v.a[m] / v.rho[m]**2)
    return 4.0 * math.sqrt(math.pi / horizon.area) / I


@dataclass(frozen=True, eq=False)
class CapacityResult:
    eps: np.ndarray
    I: np.ndarray
    sigma: np.ndarray
    area: float

    @property
    def capacity(self):
        return 4 * math.pi / self.I

    @property
    def divergent(self):
        """Whether the resistance integral keeps growing as the cut approaches the horizon."""
        return bool(np.all(np.diff(self.I[np.argsort(-self.eps)]) > 0))


def capacity_background(data, horizon):
    """Normalized capacity of the exterior in the original metric."""
    v = data.values
    m = v.r >= horizon.r_h
    I = _radial_integral(v.r[m], v.a[m] / v.rho[m]**2)
    return (4 * math.pi / I) / math.sqrt(4 * math.pi * horizon.area)


def capacity_sigma(sol, horizon, eps=None, n=4096):
    """Normalized capacity of the Jang surface cut at ``r_h + eps``, for decreasing eps."""
    eps = np.asarray([1e-2, 1e-4, 1e-6, 1e-8] if eps is None else eps, float) * sol.r_h
    x_end = sol.grid_x[-1]
    I = []
    for e in eps:
        x = np.geomspace(e, x_end, n + 1)
        x[-1] = x_end
        g = sol.fields(x)
        f = g.b / g.v.rho**2
        I.append(float(np.trapezoid(f * x, np.log(x)) + tail_integral(g.r, f)))
    I = np.array(I)
    sigma = (4 * math.pi / I) / math.sqrt(4 * math.pi * horizon.area)
    return CapacityResult(eps, I, sigma, horizon.area)


def p1_dirichlet_minimum(r, rho, b, tail_conductance, boundary="capacity"):
    """Direct minimization over piecewise-linear radial v of the Dirichlet energy.

    ``boundary="capacity"``: v = 0 at the inner sphere and v -> 1 at infinity.
    ``boundary="steklov"``: v = 1 on the inner sphere and v -> 0 at infinity
    (the Steklov quotient normalized by the boundary value).
    The exterior beyond ``r[-1]`` is represented by ``tail_conductance``.
    """
    r = np.asarray(r, float)
    rm = 0.5 * (r[1:] + r[:-1])
    rho_m = np.interp(rm, r, rho)
    b_m = np.interp(rm, r, b)
    w = 4 * math.pi * rho_m**2 / (b_m * np.diff(r))
    n = r.size
    inner, outer = (0.0, 1.0) if boundary == "capacity" else (1.0, 0.0)
    # unknowns v_1..v_{n-1}; v_0 fixed, exterior node at infinity fixed to `outer`
    diag = np.zeros(n - 1)
    diag += w
    diag[:-1] += w[1:]
    diag[-1] += tail_conductance
    rhs = np.zeros(n - 1)
    rhs[0] += w[0] * inner
    rhs[-1] += tail_conductance * outer
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = -w[1:]
    ab[1] = diag
    ab[2, :-1] = -w[1:]
    from scipy.linalg import solve_banded
    v = np.concatenate([[inner], solve_banded((1, 1), ab, rhs)])
    return float(np.sum(w * np.diff(v)**2) + tail_conductance * (v[-1] - outer)**2), v


def exterior_conductance(r_max, rho_max, b_max=1.0):
    """Conductance of the region beyond r_max when the metric is treated as flat there."""
    return 4 * math.pi * rho_max**2 / (b_max * r_max)


# ------------------------------------------------------------------------- report


@dataclass(eq=False)
class InequalityReport:
    E_g: float
    C: float
    T_min: float | None
    rows: list
    sigma_capacity: dict
    sigma_herzlich: float | None = None
    margin: float = float("nan")
    bound_rhs: float = float("nan")
    tol_energy: float = 0.0
    checks: list = field(default_factory=list)

    def as_dict(self):
        return {"E_g": self.E_g, "C": self.C, "T_min": self.T_min, "bound_rhs": self.bound_rhs,
                "margin": self.margin, "tol_energy": self.tol_energy,
                "sigma_herzlich": self.sigma_herzlich, "sigma_capacity": self.sigma_capacity,
                "per_T": self.rows, "checks": self.checks}


def _check(checks, name, value, limit, holds, kind):
    checks.append({"name": name, "value": value, "limit": limit, "holds": bool(holds),
                   "kind": kind})
    return holds


def per_T_record(sol, cap, conf, E_g, C):
    tol = tol_energy(E_g)
    S0 = _sigma_from(conf, cap, 1.0)
    row = {"T": cap.T, "x_T": cap.x_T, "r_T": cap.r_T, "boundary_area": cap.boundary_area,
           "Hbar": cap.Hbar_boundary, "defect": cap.defect, "gamma_T": cap.gamma,
           "alpha_T": conf.alpha, "Q_value": conf.Q_value, "flux": conf.flux,
           "flux_discrete": conf.flux_discrete, "coercive": conf.coercive,
           "u_min": float(conf.u.min()), "fixed_point_change": conf.fixed_point_change,
           "E_ghat_T": E_g + 2.0 * conf.alpha, "E_ghat_T_from_Q": E_g - conf.Q_value / math.pi,
           "sigma_T_C0": S0, "bound_rhs_T_C0": bound_from_sigma(S0, cap.boundary_area),
           "cylinder_decay_rate": cylinder_decay_rate(sol, conf), "tol_energy": tol}
    if cap.T > C:
        s = sigma_T(conf, cap, C)
        row["sigma_T"] = s
        row["bound_rhs_T"] = bound_from_sigma(s, cap.boundary_area, 1.0 - C / cap.T)
    else:
        row["sigma_T"] = None
        row["bound_rhs_T"] = None
    if cap.gamma < 1.0:
        s = sigma_gamma(conf, cap)
        row["sigma_T_gamma"] = s
        row["bound_rhs_T_gamma"] = bound_from_sigma(s, cap.boundary_area, 1.0 - cap.gamma)
    else:
        row["sigma_T_gamma"] = row["bound_rhs_T_gamma"] = None
    return row


def area_bound(E_g, rows, C, capacity=None, sigma_herzlich=None):
    """Assemble the per-T records into the final report, raising on any violated bound."""
    tol = tol_energy(E_g)
    checks = []
    for row in rows:
        T = row["T"]
        flux = row["flux"]
        rel = abs(2 * row["Q_value"] - flux) / max(abs(flux), 1e-12)
        _check(checks, f"flux consistency T={T}", rel, TOL_CONSISTENCY, rel < TOL_CONSISTENCY,
               "relative")
        bookkeeping = abs(row["E_ghat_T"] - row["E_ghat_T_from_Q"])
        _check(checks, f"energy bookkeeping T={T}", bookkeeping, tol, bookkeeping <= tol, "absolute")
        if not _check(checks, f"E_ghat_T >= 0 at T={T}", row["E_ghat_T"], -tol,
                      row["E_ghat_T"] >= -tol, "lower"):
            raise BoundViolation(f"deformed energy {row['E_ghat_T']:.6g} negative at T={T}")
        for key in ("bound_rhs_T", "bound_rhs_T_gamma", "bound_rhs_T_C0"):
            if row.get(key) is None:
                continue
            ok = E_g >= row[key] - tol
            _check(checks, f"E_g >= {key} at T={T}", E_g - row[key], -tol, ok, "margin")
            if not ok:
                raise BoundViolation(f"E_g = {E_g:.6g} below {key} = {row[key]:.6g} at T={T}")
    finite = [row["bound_rhs_T_gamma"] for row in rows if row.get("bound_rhs_T_gamma") is not None]
    finite += [row["bound_rhs_T"] for row in rows if row.get("bound_rhs_T") is not None]
    bound = max(finite) if finite else float("nan")
    margin = E_g - bound
    if finite and not margin > 0:
        raise BoundViolation(f"final margin {margin:.3g} is not strictly positive")
    T_min = None
    for row in rows:
        if row["coercive"] and C / row["T"] < 0.5 and row["Q_value"] >= -tol:
            T_min = row["T"]
            break
    if finite:
        _check(checks, "strict final margin", margin, 0.0, margin > 0, "strict")
    return InequalityReport(E_g, C, T_min, rows, capacity or {}, sigma_herzlich, margin, bound, tol,
                            checks)


def steklov_report(E_g, sigma_H, area):
    tol = tol_energy(E_g)
    bound = bound_from_sigma(sigma_H, area)
    margin = E_g - bound
    checks = []
    ok = _check(checks, "E_g >= herzlich bound", margin, -tol, margin >= -tol, "margin")
    if not ok:
        raise BoundViolation(f"E_g = {E_g:.6g} below the Steklov bound {bound:.6g}")
    return InequalityReport(E_g, 0.0, None, [], {}, sigma_H, margin, bound, tol, checks)
