"""Scenario registry, pipeline orchestration, convergence studies and report emission."""
from __future__ import annotations

import contextlib
import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import builders
from . import conformal_energy as ce
from . import jang_solver as js
from .errors import InvalidData, NoHorizon, PipelineError
from .radial_core import (SphericalInitialData, adm_energy, constraint_densities, dec_check,
                          find_outermost_horizon, scalar_curvature)
from .tables import write_series, write_table

DEFAULT_T = (5.0, 10.0, 20.0, 40.0)
MODES = ("steklov", "jang")
CAPACITY_EPS = (1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class Scenario:
    name: str
    builder: str
    mass: float = 1.0
    n: int = 4096
    r_max: float = 200.0
    T_schedule: tuple = DEFAULT_T
    mode: str = "jang"
    params: dict = field(default_factory=dict)
    path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidData(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.builder not in BUILDERS:
            raise InvalidData(f"unknown builder {self.builder!r}")
        object.__setattr__(self, "T_schedule", tuple(float(t) for t in self.T_schedule))

    def echo(self):
        d = asdict(self)
        d["T_schedule"] = list(self.T_schedule)
        return d


def _tabulated(sc):
    if sc.path is None:
        raise InvalidData("tabulated scenario needs a profile file")
    return SphericalInitialData.load(sc.path)


BUILDERS = {
    "schwarzschild_isotropic": lambda sc: builders.schwarzschild_isotropic(sc.mass, sc.n, sc.r_max),
    "flat": lambda sc: builders.flat(n=sc.n, r_max=sc.r_max, **sc.params),
    "dec_bump": lambda sc: builders.dec_bump(sc.mass, n=sc.n, r_max=sc.r_max, **sc.params),
    "tabulated": _tabulated,
}

SCENARIOS = {
    "schwarzschild": Scenario("schwarzschild", "schwarzschild_isotropic"),
    "schwarzschild_steklov": Scenario("schwarzschild_steklov", "schwarzschild_isotropic",
                                      mode="steklov"),
    "flat": Scenario("flat", "flat"),
    "dec_bump": Scenario("dec_bump", "dec_bump"),
}


def scenario(name, **overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if name in SCENARIOS:
        return replace(SCENARIOS[name], **overrides)
    if name == "tabulated":
        return Scenario("tabulated", "tabulated", **overrides)
    raise InvalidData(f"unknown scenario {name!r}; known: {sorted(SCENARIOS) + ['tabulated']}")


def build_data(sc):
    return BUILDERS[sc.builder](sc)


# -------------------------------------------------------------------------- running


@contextlib.contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError as exc:
        if exc.stage == "unknown":
            exc.stage = name
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def fingerprint(sc):
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    cfg = {"scenario": sc.echo(), "package": version, "numpy": np.__version__,
           "scipy": scipy.__version__, "python": platform.python_version()}
    if sc.path is not None:
        cfg["profile_sha256"] = hashlib.sha256(Path(sc.path).read_bytes()).hexdigest()
    blob = json.dumps(cfg, sort_keys=True).encode()
    return {"sha256": hashlib.sha256(blob).hexdigest(), "config": cfg}


def identity_residual(sol):
    """L2 norm (measure dr) of Rbar_direct - Rbar_identity on the Jang grid."""
    e = sol.Rbar_direct - sol.Rbar_identity
    x = sol.grid_x
    return float(math.sqrt(np.trapezoid(e**2 * x, np.log(x))))


def cylinder_diagnostic(sol, offsets=(1e-6, 1e-8, 1e-10)):
    lengths = [js.graph_length(sol, e * sol.r_h) for e in offsets]
    return {"offsets": list(offsets), "lengths": lengths,
            "growing": bool(np.all(np.diff(lengths) > 0))}


def run(sc):
    """Execute the pipeline for one scenario and return the report as a dict."""
    timings = {}
    out = {"scenario": sc.echo(), "fingerprint": fingerprint(sc), "timings": timings}
    with _stage("radial_core", timings):
        data = build_data(sc)
        E_g = adm_energy(data)
        dens = constraint_densities(data)
        dec = dec_check(dens)
        if not dec.holds:
            raise InvalidData(f"dominant energy condition fails at r = {dec.worst_radius:.6g} "
                              f"(margin {dec.worst_margin:.3g})")
        kind = sc.params.get("horizon", "future") if sc.builder == "tabulated" else "future"
        horizon = find_outermost_horizon(data, kind)
    out["data"] = data
    out["radial_core"] = {
        "E_g": E_g, "dec": dec._asdict(), "horizon": asdict(horizon),
        "max_abs_R": float(np.max(np.abs(scalar_curvature(data)))),
        "time_symmetric": data.time_symmetric,
    }
    if sc.mode == "steklov":
        with _stage("conformal_energy", timings):
            sig = ce.herzlich_sigma(data, horizon)
            rep = ce.steklov_report(E_g, sig, horizon.area)
        out["inequality"] = rep.as_dict()
        return out

    with _stage("jang_solver", timings):
        sol = js.solve_jang_blowup(data, horizon)
        C = js.estimate_C(sol, sc.T_schedule)
        slope, defects = js.defect_decay_slope(sol, sc.T_schedule)
        E_bar = js.jang_energy(sol)
    out["jang"] = {
        "residual_max": sol.residual_max, "tol_jang": js.TOL_JANG, "sweep": sol.sweep,
        "decay_K": sol.decay_K, "tail_estimate": sol.tail_estimate, "max_height": sol.max_height,
        "identity_residual_L2": identity_residual(sol), "C_estimate": C,
        "defect_slope": slope, "defects": list(defects), "E_gbar": E_bar,
        "cylinder": cylinder_diagnostic(sol),
    }
    out["solution"] = sol

    rows, confs = [], {}
    with _stage("conformal_energy", timings):
        for T in sc.T_schedule:
            cap = ce.cap_surface(sol, T)
            conf = ce.solve_conformal_bvp(sol, cap)
            row = ce.per_T_record(sol, cap, conf, E_g, C)
            lhs, rhs = ce.q_lower_bound_check(sol, cap, conf.v, mesh=conf.mesh)
            row["q_lower_bound"] = {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs - ce.tol_energy(E_g)}
            rows.append(row)
            confs[T] = conf
        capacity = ce.capacity_sigma(sol, horizon, CAPACITY_EPS)
        cap_info = {
            "eps": list(capacity.eps), "I": list(capacity.I), "sigma": list(capacity.sigma),
            "divergent": capacity.divergent,
            "bound": [ce.bound_from_sigma(s, horizon.area) for s in capacity.sigma],
            "background_sigma": ce.capacity_background(data, horizon),
        }
        sig_H = ce.herzlich_sigma(data, horizon) if data.time_symmetric else None
        rep = ce.area_bound(E_g, rows, C, cap_info, sig_H)
    out["conformal"] = confs
    out["inequality"] = rep.as_dict()
    return out


# ------------------------------------------------------------------ convergence study


def fitted_order(values, exact=None, floor=1e-12):
    """Observed order for values at resolutions in ratio 2; None when at rounding level."""
    q = np.asarray(values, float)
    if exact is not None:
        e = np.abs(q - exact)
    else:
        e = np.abs(np.diff(q))
    scale = max(np.max(np.abs(q)), 1.0)
    if np.any(e <= floor * scale):
        return None
    orders = np.log2(e[:-1] / e[1:])
    return float(orders[-1])


def convergence_study(sc, resolutions=(1024, 2048, 4096)):
    res = sorted(int(n) for n in resolutions)
    if len(res) < 3 or any(b != 2 * a for a, b in zip(res, res[1:])):
        raise InvalidData("convergence study needs three or more resolutions in ratio 2")
    rows = []
    for n in res:
        sub = replace(sc, n=n)
        data = build_data(sub)
        row = {"n": n, "E_g": adm_energy(data),
               "max_abs_R": float(np.max(np.abs(scalar_curvature(data))))}
        try:
            horizon = find_outermost_horizon(data)
        except NoHorizon:
            horizon = None
        if horizon is not None and data.time_symmetric:
            row["sigma_H"] = ce.herzlich_sigma(data, horizon)
        if horizon is not None and sc.mode == "jang":
            sol = js.solve_jang_blowup(data, horizon, sweep=False)
            row["identity_residual_L2"] = identity_residual(sol)
        rows.append(row)
    exact = {}
    if sc.builder == "schwarzschild_isotropic":
        exact = {"E_g": sc.mass, "sigma_H": 1.0}
    orders = {}
    for key in rows[0]:
        if key == "n":
            continue
        vals = [r[key] for r in rows]
        if key in ("identity_residual_L2", "max_abs_R"):
            orders[key] = fitted_order(vals, exact=0.0)
        else:
            orders[key] = fitted_order(vals, exact=exact.get(key))
    return {"rows": rows, "orders": orders, "band": [1.5, 2.5]}


# ------------------------------------------------------------------------- emission


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def report_document(report):
    """The JSON-ready part of a run report (no arrays, no solver objects)."""
    skip = {"data", "solution", "conformal"}
    return _clean({k: v for k, v in report.items() if k not in skip})


def emit(report, out_dir, fmt="json"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_document(report)
    files = []
    if fmt == "json":
        path = out / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    elif fmt == "yaml":
        import yaml
        path = out / "report.yaml"
        path.write_text(yaml.safe_dump(doc, sort_keys=True))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    files.append(path)

    data = report.get("data")
    if data is not None:
        files.append(data.save(out / "profile.dat", {"fingerprint": doc["fingerprint"]["sha256"]}))
    sol = report.get("solution")
    if sol is not None:
        files.append(write_table(out / "jang.dat", sol.table(), {"r_h": sol.r_h}))
    rows = doc.get("inequality", {}).get("per_T", [])
    if rows:
        T = [r["T"] for r in rows]
        files.append(write_series(out / "sigma_T.dat", T, [r["sigma_T_C0"] for r in rows],
                                  "T", "sigma_T_C0"))
        files.append(write_series(out / "sigma_T_gamma.dat", T,
                                  [np.nan if r["sigma_T_gamma"] is None else r["sigma_T_gamma"]
                                   for r in rows], "T", "sigma_T_gamma"))
        files.append(write_series(out / "boundary_area.dat", T,
                                  [r["boundary_area"] for r in rows], "T", "boundary_area"))
    for T, conf in (report.get("conformal") or {}).items():
        files.append(write_series(out / f"u_T{T:g}.dat", conf.r, conf.u, "r", "u_T"))
    return files
