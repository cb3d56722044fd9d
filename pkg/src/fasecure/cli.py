"""Command-line front end.

Subcommands ``run``, ``baseline``, ``sweep``, ``verify`` and ``beampattern``
read JSON configs and write CSV/JSON data files. Exit codes: 0 ok,
1 verification failure, 2 config error, 3 infeasible scenario, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics
from .config import (ConfigError, load_config, parse_quantity, scenario_from_dict,
                     scenario_to_dict, write_csv)
from .driver import SolverOptions, SolverReport, bsum_solve, fa_multistart, fpa_baseline
from .scenario import ScenarioError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3, 4

BEAMPATTERN_SCHEMA = "fasecure.beampattern/v1"
SWEEP_SCHEMA = "fasecure.sweep/v1"
SWEEP_COLUMNS = ("value", "seed", "fa_secrecy", "fpa_secrecy", "probing", "iterations", "status")
SOLVER_KEYS = {"max_outer", "tol", "init", "seed", "refresh_before_positions",
               "layout_starts", "random_starts"}

log = logging.getLogger("fasecure")


def solver_options(section, seed=None):
    unknown = set(section) - SOLVER_KEYS
    if unknown:
        raise ConfigError(f"unknown solver keys: {', '.join(sorted(unknown))}")
    opts = SolverOptions(**section)
    if opts.init not in ("default", "random"):
        raise ConfigError(f"solver.init must be 'default' or 'random', got {opts.init!r}")
    if seed is not None:
        opts = replace(opts, seed=seed)
    return opts


def beampattern_rows(d, W, s, n=361):
    grid = np.linspace(0.0, np.pi, n)
    gain = metrics.beampattern(d, W, s.wavelength, grid)
    peak = float(np.max(gain))
    with np.errstate(divide="ignore"):
        norm_db = 10.0 * np.log10(np.maximum(gain, 1e-300) / peak) if peak > 0 \
            else np.full(n, -np.inf)
    return [(float(np.rad2deg(a)), float(g), float(x)) for a, g, x in zip(grid, gain, norm_db)]


def write_run(out, rep: SolverReport, s, raw):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trace.csv", SolverReport.TRACE_SCHEMA, SolverReport.TRACE_COLUMNS,
              [[r[c] for c in SolverReport.TRACE_COLUMNS] for r in rep.rows])
    summary = rep.summary(scenario_to_dict(s))
    summary["input"] = raw
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    write_csv(out / "beampattern.csv", BEAMPATTERN_SCHEMA,
              ("angle_deg", "gain", "gain_db_normalized"), beampattern_rows(rep.d, rep.W, s))


def _guarded(fn):
    """Map library exceptions onto exit codes."""
    def wrapper(args):
        try:
            return fn(args)
        except (ConfigError, OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except ScenarioError as exc:
            print(f"infeasible scenario: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    return wrapper


def _solve(args, baseline):
    s, section, raw = load_config(args.config)
    opts = solver_options(section, args.seed)
    s.check_feasible()
    if baseline:
        rep = fpa_baseline(s, opts)
    elif opts.layout_starts or opts.random_starts:
        rep = fa_multistart(s, None, opts)
    else:
        rep = bsum_solve(s, opts=opts)
    write_run(args.out, rep, s, raw)
    f = rep.final
    print(f"{rep.label}: status={rep.status} iterations={rep.iterations} "
          f"sum_secrecy={f.sum_secrecy:.6g} bits/s/Hz probing={f.probing_power:.6g} W "
          f"power={f.total_power:.6g} W -> {args.out}")
    return EXIT_OK


@_guarded
def cmd_run(args):
    return _solve(args, baseline=False)


@_guarded
def cmd_baseline(args):
    return _solve(args, baseline=True)


def sweep_cell(task):
    """One (value, seed) cell; never raises, failures land in ``status``."""
    scen_dict, section, vary, value, seed, with_fpa = task
    row = {"value": value, "seed": seed, "fa_secrecy": float("nan"),
           "fpa_secrecy": float("nan"), "probing": float("nan"), "iterations": 0,
           "status": ""}
    try:
        s, _ = scenario_from_dict(scen_dict)
        field = {"P_max": "power_budget", "P_d": "probing_threshold", "M": "num_antennas"}[vary]
        s = s.replace(**{field: int(value) if vary == "M" else value})
        s.check_feasible()
        opts = solver_options(section, seed)
        if with_fpa:
            fpa = fpa_baseline(s, opts)
            row["fpa_secrecy"] = fpa.sum_secrecy
            fa = fa_multistart(s, fpa, opts)
        else:
            fa = bsum_solve(s, opts=opts)
        row.update(fa_secrecy=fa.sum_secrecy, probing=fa.final.probing_power,
                   iterations=fa.iterations, status=fa.status)
    except ScenarioError as exc:
        row["status"] = f"infeasible: {exc}"
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        row["status"] = f"numerical: {type(exc).__name__}"
    return row


def _sweep_values(vary, values):
    out = []
    for v in values:
        if vary == "M":
            if float(v) != int(float(v)):
                raise ConfigError(f"M values must be integers, got {v!r}")
            out.append(int(float(v)))
        else:
            out.append(parse_quantity(v, "power"))
    return out


@_guarded
def cmd_sweep(args):
    s, section, raw = load_config(args.config)
    values = _sweep_values(args.vary, args.values)
    base = scenario_to_dict(s)
    seeds = [args.seed + i for i in range(args.seeds)]
    tasks = [(base, section, args.vary, v, sd, args.baseline == "fpa")
             for v in values for sd in seeds]
    solver_options(section)             # reject bad solver keys before any work
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(sweep_cell, tasks))
    else:
        rows = [sweep_cell(t) for t in tasks]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, SWEEP_SCHEMA, SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows])
    bad = sum(1 for r in rows if r["status"] not in ("converged", "max_iters", "stalled"))
    print(f"sweep: {len(rows)} cells, {bad} failed -> {out}")
    return EXIT_OK


@_guarded
def cmd_beampattern(args):
    summary = json.loads(Path(args.summary).read_text(encoding="utf-8"))
    if "config" not in summary:
        raise ConfigError("summary has no config echo")
    s, _ = scenario_from_dict(summary["config"])
    W = np.array(summary["beamformers_real"]) + 1j * np.array(summary["beamformers_imag"])
    d = np.array(summary["positions"])
    write_csv(args.out, BEAMPATTERN_SCHEMA, ("angle_deg", "gain", "gain_db_normalized"),
              beampattern_rows(d, W, s, args.points))
    print(f"beampattern: {args.points} angles -> {args.out}")
    return EXIT_OK


def cmd_verify(args, gradient=None):
    from .verification import run_suite
    results = run_suite(args.suite, h=args.h, seed=args.seed, gradient=gradient)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"verify: {sum(r.passed for r in results)}/{len(results)} gates passed")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="fasecure",
                                description="Secure fluid-antenna ISAC beamforming solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("run", cmd_run, "joint beamformer and position solve"),
                               ("baseline", cmd_baseline, "fixed uniform array solve")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("config")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--out", default="out")
        q.set_defaults(func=fn)

    q = sub.add_parser("sweep", help="parameter sweep, FA against the FPA baseline")
    q.add_argument("config")
    q.add_argument("--vary", choices=("P_max", "P_d", "M"), required=True)
    q.add_argument("--values", nargs="+", required=True,
                   help="values; powers accept unit suffixes such as '30dBm'")
    q.add_argument("--baseline", choices=("fpa", "none"), default="fpa")
    q.add_argument("--seeds", type=int, default=1)
    q.add_argument("--seed", type=int, default=0, help="first seed")
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--out", default="sweep.csv")
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("verify", help="run oracle gates")
    q.add_argument("--suite", choices=("gradients", "projections", "oracle", "all"),
                   default="all")
    q.add_argument("--h", type=float, default=1e-6, help="finite-difference step (m)")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("beampattern", help="beampattern of a saved solution")
    q.add_argument("summary")
    q.add_argument("--points", type=int, default=361)
    q.add_argument("--out", default="beampattern.csv")
    q.set_defaults(func=cmd_beampattern)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
