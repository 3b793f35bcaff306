"""Spherically symmetric initial data sets (M, g, k).

The metric is ``g = a(r)^2 dr^2 + rho(r)^2 dOmega^2`` and the extrinsic curvature
has mixed components ``diag(kr, kt, kt)``.  Geometric units, G = c = 1.

Profiles are carried as node samples plus derivative samples; between nodes they
are evaluated through piecewise cubic Hermite interpolants.  For ``a`` and ``rho``
the interpolant is built on the first derivative and integrated once, so every
derivative used downstream is the exact derivative of one interpolated data set
and nothing is obtained by differencing nearly equal values on short intervals.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import BPoly, PPoly
from scipy.optimize import bisect

from .errors import AsymptoticMismatch, InvalidData, NoHorizon
from .tables import read_table, write_table

TOL_DEC = 1e-10
MIN_INTERVALS = 16

PROFILE_COLUMNS = ("r", "a", "a1", "a2", "rho", "rho1", "rho2", "kr", "kr1", "kt", "kt1")


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    refinement: str = "uniform"
    first_step: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size - 1 < MIN_INTERVALS:
            raise InvalidData(f"grid needs at least {MIN_INTERVALS + 1} nodes")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise InvalidData("grid nodes must be finite and strictly increasing")
        if nodes[0] <= 0:
            raise InvalidData("grid must start at a positive radius")
        if nodes[-1] / nodes[0] < 10:
            raise InvalidData("r_max / r_0 must be at least 10 to represent the asymptotic end")

    @classmethod
    def uniform(cls, r0, r_max, n):
        return cls(np.linspace(r0, r_max, n + 1), "uniform")

    @classmethod
    def geometric(cls, r0, r_max, n, first_step=None):
        """``n + 1`` nodes, spacing growing geometrically away from ``r0``."""
        span = r_max - r0
        if first_step is None:
            first_step = 1e-6 * r0
        offsets = np.geomspace(first_step, span, n)
        nodes = np.concatenate([[r0], r0 + offsets])
        nodes[-1] = r_max
        return cls(nodes, "geometric", float(first_step))

    @property
    def r0(self):
        return float(self.nodes[0])

    @property
    def r_max(self):
        return float(self.nodes[-1])

    @property
    def n(self):
        return self.nodes.size - 1

    def spec(self):
        return {"refinement": self.refinement, "r0": self.r0, "r_max": self.r_max,
                "n": self.n, "first_step": self.first_step}


# ------------------------------------------------------------------------ profiles


@dataclass(frozen=True, eq=False)
class ProfileValues:
    """Pointwise values of the data and the derivatives the geometry needs."""
    r: np.ndarray
    a: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    rho: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    kr: np.ndarray
    kr1: np.ndarray
    kt: np.ndarray
    kt1: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in PROFILE_COLUMNS}


def _hermite_ppoly(x, *derivs):
    bp = BPoly.from_derivatives(x, np.column_stack(derivs))
    return PPoly.from_bernstein_basis(bp)


def _integrated(p, start):
    out = p.antiderivative()
    out.c[-1] += start
    return out


def _stack_ppolys(polys):
    order = max(p.c.shape[0] for p in polys)
    coeffs = []
    for p in polys:
        c = p.c
        if c.shape[0] < order:
            c = np.concatenate([np.zeros((order - c.shape[0], c.shape[1])), c])
        coeffs.append(c)
    return PPoly(np.stack(coeffs, axis=-1), polys[0].x, extrapolate=True)


def _fornberg(z, x, m):
    """Finite-difference weights for derivatives 0..m at ``z`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_derivative(x, y, order=1):
    """Fourth-order (in the interior, on smooth grids) finite-difference derivative."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    width = 4 + order
    out = np.empty_like(y)
    n = x.size
    for i in range(n):
        lo = min(max(i - width // 2, 0), n - width)
        sl = slice(lo, lo + width)
        out[i] = _fornberg(x[i], x[sl], order)[:, order] @ y[sl]
    return out


@dataclass(frozen=True, eq=False)
class SphericalInitialData:
    grid: RadialGrid
    values: ProfileValues
    mass_hint: float | None = None
    label: str = ""
    _interp: PPoly = field(init=False, repr=False)

    def __post_init__(self):
        v = self.values
        n = self.grid.nodes.size
        for name in PROFILE_COLUMNS:
            arr = getattr(v, name)
            if arr.shape != (n,):
                raise InvalidData(f"profile column {name!r} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise InvalidData(f"profile column {name!r} contains non-finite samples")
        if not np.array_equal(v.r, self.grid.nodes):
            raise InvalidData("profile radii differ from grid nodes")
        if np.any(v.a <= 0) or np.any(v.rho <= 0):
            raise InvalidData("metric factors a and rho must be positive")
        x = self.grid.nodes
        pa1 = _hermite_ppoly(x, v.a1, v.a2)
        prho1 = _hermite_ppoly(x, v.rho1, v.rho2)
        pa, prho = _integrated(pa1, v.a[0]), _integrated(prho1, v.rho[0])
        pkr = _hermite_ppoly(x, v.kr, v.kr1)
        pkt = _hermite_ppoly(x, v.kt, v.kt1)
        polys = [pa, pa1, pa1.derivative(),
                 prho, prho1, prho1.derivative(),
                 pkr, pkr.derivative(), pkt, pkt.derivative()]
        object.__setattr__(self, "_interp", _stack_ppolys(polys))

    # construction --------------------------------------------------------

    @classmethod
    def from_functions(cls, grid, a, rho, kr=None, kt=None, mass_hint=None, label=""):
        """Sample closed-form profiles.

        ``a`` and ``rho`` are ``(f, f', f'')`` triples of callables, ``kr`` and ``kt``
        are ``(f, f')`` pairs; omitted curvature components are zero.
        """
        r = grid.nodes
        zero = (lambda s: np.zeros_like(s), lambda s: np.zeros_like(s))
        kr = kr or zero
        kt = kt or zero

        def ev(fn):
            return np.broadcast_to(np.asarray(fn(r), dtype=float), r.shape).copy()

        vals = ProfileValues(r.copy(), *(ev(f) for f in a), *(ev(f) for f in rho),
                             *(ev(f) for f in kr), *(ev(f) for f in kt))
        return cls(grid, vals, mass_hint, label)

    @classmethod
    def from_samples(cls, grid, a, rho, kr=None, kt=None, derivatives=None, mass_hint=None,
                     label=""):
        """Build from samples; derivatives not supplied come from finite differences."""
        r = grid.nodes
        d = dict(derivatives or {})
        cols = {"r": r, "a": np.asarray(a, float), "rho": np.asarray(rho, float),
                "kr": np.zeros_like(r) if kr is None else np.asarray(kr, float),
                "kt": np.zeros_like(r) if kt is None else np.asarray(kt, float)}
        for base in ("a", "rho"):
            cols[base + "1"] = d.get(base + "1", fd_derivative(r, cols[base], 1))
            cols[base + "2"] = d.get(base + "2", fd_derivative(r, cols[base], 2))
        for base in ("kr", "kt"):
            cols[base + "1"] = d.get(base + "1", fd_derivative(r, cols[base], 1))
        return cls(grid, ProfileValues(**{k: np.asarray(cols[k], float) for k in PROFILE_COLUMNS}),
                   mass_hint, label)

    # evaluation ----------------------------------------------------------

    @property
    def samples(self):
        return self.values

    def at_scalar(self, r):
        """All ten interpolated columns at one radius, without PPoly call overhead."""
        pp = self._interp
        i = min(max(bisect_right(self.grid.nodes, r) - 1, 0), self.grid.n - 1)
        dx = r - pp.x[i]
        c = pp.c[:, i]
        out = c[0]
        for row in c[1:]:
            out = out * dx + row
        return out

    def at(self, r):
        r = np.asarray(r, dtype=float)
        out = self._interp(r)
        return ProfileValues(r, *np.moveaxis(out, -1, 0))

    @property
    def time_symmetric(self):
        return bool(np.all(self.values.kr == 0) and np.all(self.values.kt == 0))

    # serialization -------------------------------------------------------

    def save(self, path, extra_header=None):
        header = {"format": "penrose_jang.profile/1", "units": "geometric (G = c = 1)",
                  "grid": self.grid.spec(), "label": self.label, "mass_hint": self.mass_hint}
        header.update(extra_header or {})
        return write_table(path, self.values.as_dict(), header)

    @classmethod
    def load(cls, path):
        header, cols = read_table(path)
        spec = header.get("grid", {})
        grid = RadialGrid(cols["r"], spec.get("refinement", "tabulated"), spec.get("first_step"))
        missing = [c for c in ("r", "a", "rho") if c not in cols]
        if missing:
            raise InvalidData(f"{path}: missing columns {missing}")
        deriv = {k: cols[k] for k in ("a1", "a2", "rho1", "rho2", "kr1", "kt1") if k in cols}
        return cls.from_samples(grid, cols["a"], cols["rho"], cols.get("kr"), cols.get("kt"),
                                deriv, header.get("mass_hint"), header.get("label", str(path)))


# ------------------------------------------------------------------------ geometry


def _values(data, r=None):
    return data.values if r is None else data.at(r)


def curvature_from_metric(a, a1, rho, rho1, rho2):
    """Scalar curvature of ``a^2 dr^2 + rho^2 dOmega^2``."""
    return (2.0 / rho**2 - 2.0 * rho1**2 / (a**2 * rho**2)
            - 4.0 * rho2 / (a**2 * rho) + 4.0 * rho1 * a1 / (a**3 * rho))


def scalar_curvature(data, r=None):
    v = _values(data, r)
    return curvature_from_metric(v.a, v.a1, v.rho, v.rho1, v.rho2)


@dataclass(frozen=True, eq=False)
class ConstraintDensities:
    r: np.ndarray
    mu: np.ndarray
    J_r: np.ndarray
    J_norm: np.ndarray

    @property
    def dec_margin(self):
        return self.mu - self.J_norm


def constraint_densities(data, r=None):
    """Energy and momentum densities from the Hamiltonian and momentum constraints."""
    v = _values(data, r)
    R = curvature_from_metric(v.a, v.a1, v.rho, v.rho1, v.rho2)
    trk = v.kr + 2.0 * v.kt
    k2 = v.kr**2 + 2.0 * v.kt**2
    mu = (R + trk**2 - k2) / (16.0 * math.pi)
    # nabla^j (k_rj - tr k g_rj) reduced to the radial component
    J_r = (2.0 * v.rho1 / v.rho * (v.kr - v.kt) - 2.0 * v.kt1) / (8.0 * math.pi)
    return ConstraintDensities(v.r, mu, J_r, np.abs(J_r) / v.a)


class DecResult(NamedTuple):
    holds: bool
    worst_margin: float
    worst_radius: float


def dec_check(densities, tol=TOL_DEC):
    margin = densities.dec_margin
    i = int(np.argmin(margin))
    return DecResult(bool(margin[i] >= -tol), float(margin[i]), float(densities.r[i]))


def null_expansions(data, r=None):
    """``(theta_plus, theta_minus)`` of the round spheres, outward normal."""
    v = _values(data, r)
    H = 2.0 * v.rho1 / (v.a * v.rho)
    return H + 2.0 * v.kt, H - 2.0 * v.kt


# ------------------------------------------------------------------------ horizons


@dataclass(frozen=True)
class HorizonRecord:
    r_h: float
    kind: str
    area: float
    outermost: bool = True

    @property
    def sign(self):
        return 1 if self.kind == "future" else -1


def expansion(data, kind, r=None):
    tp, tm = null_expansions(data, r)
    if kind == "future":
        return tp
    if kind == "past":
        return tm
    raise ValueError(f"unknown horizon kind {kind!r}")


def find_outermost_horizon(data, kind="future", tol_root=None):
    """Largest root of the requested null expansion.

    The root is bracketed on the grid and bisected on the interpolated profile
    down to rounding level, which is tighter than ``tol_root``; the Jang
    startup needs ``r - r_h`` resolved far below ``1e-10 r_max``.
    """
    nodes = data.grid.nodes
    tol_root = 1e-10 * data.grid.r_max if tol_root is None else tol_root
    theta = expansion(data, kind)
    if theta[-1] <= 0:
        raise InvalidData(f"theta_{kind} is not positive at r_max")
    nonpos = np.flatnonzero(theta <= 0)
    if nonpos.size == 0:
        raise NoHorizon(f"no {kind} apparent horizon on [{nodes[0]}, {nodes[-1]}]")
    i = int(nonpos[-1])
    if theta[i] == 0.0:
        r_h = float(nodes[i])
    else:
        def fn(s):
            return float(expansion(data, kind, np.array([s]))[0])
        r_h = bisect(fn, nodes[i], nodes[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps,
                     maxiter=400)
        if abs(fn(r_h)) > 1e-8 and nodes[i + 1] - nodes[i] > tol_root:
            raise NoHorizon(f"bisection did not converge to a {kind} root near r={r_h}")
    rho_h = float(data.at(np.array([r_h])).rho[0])
    return HorizonRecord(r_h, kind, 4.0 * math.pi * rho_h**2, True)


# ------------------------------------------------------------------------ asymptotics


def outer_decade(r, decade=10.0):
    return r >= r[-1] / decade


def richardson_limit(r, values, degree=3, decade=10.0):
    """Limit r -> infinity of samples modelled as a polynomial in 1/r on the outer decade."""
    r = np.asarray(r, float)
    mask = outer_decade(r, decade)
    if mask.sum() < degree + 2:
        raise InvalidData("outer decade holds too few nodes for extrapolation")
    fit = np.polynomial.Polynomial.fit(1.0 / r[mask], np.asarray(values, float)[mask], degree)
    return float(fit(0.0))


def tail_integral(r, integrand, degree=3, decade=10.0):
    """Integral of ``integrand`` from r_max to infinity assuming ``r^2 integrand`` is a polynomial in 1/r."""
    r = np.asarray(r, float)
    mask = outer_decade(r, decade)
    fit = np.polynomial.Polynomial.fit(1.0 / r[mask], r[mask]**2 * np.asarray(integrand)[mask],
                                       degree).convert()
    R = r[-1]
    return float(sum(c / ((k + 1) * R**(k + 1)) for k, c in enumerate(fit.coef)))


def check_asymptotic_flatness(data, growth=2.0):
    """Reject profiles whose tails decay slower than the required fall-off."""
    v = getattr(data, "values", data)
    r = v.r
    m = outer_decade(r)
    checks = {
        "a - 1 = O(1/r)": r * np.abs(v.a - 1.0),
        "rho/r - 1 = O(1/r)": r * np.abs(v.rho / r - 1.0),
        "|k| = O(1/r^2)": r**2 * (np.abs(v.kr) + np.abs(v.kt)),
    }
    for name, q in checks.items():
        q = q[m]
        first, last = q[: max(2, q.size // 10)].max(), q[-max(2, q.size // 10):].max()
        if last > growth * first + 1e-12:
            raise InvalidData(f"fall-off violated: {name} grows by {last / max(first, 1e-300):.3g} "
                              "across the outer decade")


def adm_tolerance(r_max):
    return max(1e-4, 50.0 / r_max)


def misner_sharp_mass(v):
    return 0.5 * v.rho * (1.0 - (v.rho1 / v.a)**2)


def adm_energy_estimates(data):
    """``(quasi_local_limit, coordinate_flux_limit)``."""
    v = getattr(data, "values", data)
    check_asymptotic_flatness(v)
    r = v.r
    quasi = richardson_limit(r, misner_sharp_mass(v))
    # Cartesian chart x = r n: g_ij = B delta_ij + (A - B) n_i n_j
    A = v.a**2
    B = (v.rho / r)**2
    dB = 2.0 * (v.rho / r) * (v.rho1 / r - v.rho / r**2)
    flux = richardson_limit(r, 0.5 * r * (A - B) - 0.5 * r**2 * dB)
    return quasi, flux


def adm_energy(data, tol=None):
    quasi, flux = adm_energy_estimates(data)
    v = getattr(data, "values", data)
    tol = adm_tolerance(float(v.r[-1])) if tol is None else tol
    if abs(quasi - flux) > tol:
        raise AsymptoticMismatch(f"ADM estimators disagree: quasi-local {quasi!r}, flux {flux!r}")
    return quasi


def adm_momentum(data, n_quad=16):
    """ADM momentum; the radial flux integrated against the direction vector vanishes."""
    v = data.values
    R = v.r[-1]
    # radial component of k - tr(k) g in the unit normal frame, constant on the sphere
    radial = v.a[-1]**2 * (v.kr[-1] - (v.kr[-1] + 2 * v.kt[-1])) / v.a[-1]**2
    mu, w = np.polynomial.legendre.leggauss(n_quad)
    phi = 2 * np.pi * np.arange(2 * n_quad) / (2 * n_quad)
    st = np.sqrt(1 - mu**2)
    n_avg = np.array([
        np.sum(w[:, None] * st[:, None] * np.cos(phi)[None, :]) * (np.pi / n_quad),
        np.sum(w[:, None] * st[:, None] * np.sin(phi)[None, :]) * (np.pi / n_quad),
        np.sum(w * mu) * 2 * np.pi,
    ])
    P = radial * R**2 * n_avg / (8 * np.pi)
    assert np.all(np.abs(P) <= 1e-12 * (abs(radial) * R**2 + 1.0))
    return np.zeros(3)
