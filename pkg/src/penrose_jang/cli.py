"""Command line entry point: ``penrose-jang run|study|list``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .errors import PipelineError

OUT_ENV = "PENROSE_JANG_OUT"


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="penrose-jang",
        description="Jang-deformation energy bounds for spherically symmetric initial data.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", default="schwarzschild",
                       help="registry name, or 'tabulated' together with --profile")
        p.add_argument("--profile", default=None, help="columnar profile file for 'tabulated'")
        p.add_argument("--mass", type=float, default=None, help="mass parameter m")
        p.add_argument("--grid", type=int, default=None, help="number of grid intervals N")
        p.add_argument("--rmax", type=float, default=None, help="outer radius")
        p.add_argument("--tschedule", type=_floats, default=None,
                       help="comma separated cap heights")
        p.add_argument("--mode", choices=harness.MODES, default=None)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_ENV} or ./penrose_jang_out)")
        p.add_argument("--format", choices=("json", "yaml"), default="json")

    run_p = sub.add_parser("run", help="run the full pipeline for one scenario")
    common(run_p)
    study_p = sub.add_parser("study", help="grid convergence study")
    common(study_p)
    study_p.add_argument("--resolutions", type=_ints, default=(1024, 2048, 4096))
    sub.add_parser("list", help="list registered scenarios")
    return parser


def _scenario(args):
    return harness.scenario(args.scenario, mass=args.mass, n=args.grid, r_max=args.rmax,
                            T_schedule=args.tschedule, mode=args.mode, path=args.profile)


def _out_dir(args):
    return args.out or os.environ.get(OUT_ENV) or "penrose_jang_out"


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, sc in sorted(harness.SCENARIOS.items()):
            print(f"{name:22s} builder={sc.builder} mode={sc.mode} N={sc.n} r_max={sc.r_max:g}")
        print(f"{'tabulated':22s} builder=tabulated (needs --profile)")
        return 0
    try:
        sc = _scenario(args)
        if args.command == "run":
            report = harness.run(sc)
            files = harness.emit(report, _out_dir(args), args.format)
            ineq = report["inequality"]
            print(f"{sc.name}: E_g = {ineq['E_g']:.10g}  bound = {ineq['bound_rhs']:.6g}  "
                  f"margin = {ineq['margin']:.6g}")
            print(f"wrote {len(files)} files to {_out_dir(args)}")
        else:
            table = harness.convergence_study(sc, args.resolutions)
            out = _out_dir(args)
            os.makedirs(out, exist_ok=True)
            path = os.path.join(out, "convergence.json")
            with open(path, "w") as fh:
                json.dump(harness._clean({"scenario": sc.echo(), **table}), fh, indent=2)
            for key, order in table["orders"].items():
                print(f"{key:24s} order = {'skipped (rounding level)' if order is None else f'{order:.3f}'}")
    except PipelineError as exc:
        print(f"error [{exc.stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
