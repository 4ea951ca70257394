"""Command-line entry point: ``simulate``, ``check`` and ``envelope``.

Exit codes
----------
simulate: 0 clean run, 2 constraint violations or anomalies, 1 config error
          (including an uncertified config without ``--force``).
check:    0 feasible, 3 infeasible, 1 config error.
envelope: 0 ok, 1 domain error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config
from .envelopes import PpfEnvelope, convergence_time, time_grid
from .exceptions import TvblfError
from .feasibility import check_feasibility
from .sim import run

log = logging.getLogger("tvblf")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION, EXIT_INFEASIBLE = 0, 1, 2, 3


def _setup_logging():
    level = os.environ.get("TVBLF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _certify(problem):
    report = check_feasibility(problem.feasibility)
    return report


def _margin_csv(path, problem, report):
    """Write the certificate margins, plus the degree-valued variant if relevant."""
    cols = {"t": report.grid, "margin_rad": report.margins}
    if problem.units == "deg":
        # the same angle numbers left unconverted; shows how much the verdict
        # depends on the unit convention
        raw = config.build(config.variant(problem.doc, units="rad"),
                           grid_step=report.grid_step, horizon=float(report.grid[-1]))
        alt = check_feasibility(raw.feasibility)
        cols["margin_deg"] = (alt.margins if alt.margins.size == report.margins.size
                              else np.full_like(report.margins, np.nan))
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in np.column_stack(list(cols.values())):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_check(args):
    try:
        problem = config.load(args.config, grid_step=args.grid_step, horizon=args.horizon)
    except (TvblfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = _certify(problem)
    out = report.to_dict()
    out["alphaSelected"] = out["alpha"]
    out["units"] = problem.units
    out["marginSeries"] = None
    if report.margins.size:
        csv_path = (Path(args.margins) if args.margins
                    else Path.cwd() / f"{Path(args.config).stem}_margins.csv")
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        _margin_csv(csv_path, problem, report)
        out["marginSeries"] = str(csv_path)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def simulate_one(config_path, out_dir, force=False, dt=None, horizon=None, argv=None):
    """Run one configuration into ``out_dir`` and return the exit code."""
    start = time.perf_counter()
    out_dir = Path(out_dir)
    try:
        problem = config.load(config_path, dt=dt, horizon=horizon)
    except (TvblfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = _certify(problem)
    if problem.sim is None:
        print(f"error: {problem.error}", file=sys.stderr)
        return EXIT_ERROR
    if not report.feasible and not force:
        print(f"error: configuration is not certified ({report.message}); "
              "pass --force to simulate anyway", file=sys.stderr)
        return EXIT_ERROR
    try:
        traj, summary = run(problem.sim, certificate=report.to_dict())
    except TvblfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "trajectory.csv"
    summary_path = out_dir / "summary.json"
    cfg_copy = out_dir / "config.json"
    traj.write_csv(csv_path)
    _write_json(summary_path, summary.to_dict())
    shutil.copyfile(config_path, cfg_copy)
    code = EXIT_OK if summary.total_violations == 0 and summary.anomaly_count == 0 else EXIT_VIOLATION
    _write_json(out_dir / "manifest.json", {
        "configPath": str(config_path),
        "configSha256": config.file_sha256(config_path),
        "toolVersion": __version__,
        "command": list(argv) if argv is not None else None,
        "overrides": {"dt": dt, "horizon": horizon, "force": force},
        "certificateFeasible": report.feasible,
        "outputs": {"trajectory": csv_path.name, "summary": summary_path.name,
                    "config": cfg_copy.name},
        "exitCode": code,
        "wallClockSeconds": time.perf_counter() - start,
    })
    v = summary.violations
    print(f"{config_path}: violations e={v['e']} edot={v['edot']} r={v['r']} tau={v['tau']}, "
          f"anomalies={summary.anomaly_count}, aborted={summary.aborted}")
    return code


def cmd_simulate(args):
    path = Path(args.config)
    kw = dict(force=args.force, dt=args.dt, horizon=args.horizon, argv=sys.argv)
    if not path.is_dir():
        return simulate_one(path, args.out, **kw)
    configs = sorted(path.glob("*.json"))
    if not configs:
        print(f"error: no *.json configs in {path}", file=sys.stderr)
        return EXIT_ERROR
    outs = [Path(args.out) / c.stem for c in configs]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        codes = list(pool.map(simulate_one, configs, outs, *[[v] * len(configs) for v in kw.values()]))
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return max(codes)


def cmd_envelope(args):
    try:
        env = PpfEnvelope(args.phi0, args.phiInf, args.kappa, args.nu)
        tc = convergence_time(env, args.eps)
    except TvblfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    grid = time_grid(args.horizon, args.step)
    deriv_grid = grid if env.nu >= 1 else grid[grid > 0]
    print(json.dumps({
        "envelope": env.to_dict(),
        "eps": args.eps,
        "convergenceTime": tc,
        "values": {"t": grid.tolist(), "phi": np.asarray(env.value(grid)).tolist()},
        "derivatives": {"t": deriv_grid.tolist(),
                        "dphi": np.asarray(env.derivative(deriv_grid)).tolist()},
    }, indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tvblf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="closed-loop simulation of a config (or a directory)")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--force", action="store_true", help="simulate even if not certified")
    s.add_argument("--dt", type=float)
    s.add_argument("--horizon", type=float)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check", help="offline feasibility certificate")
    c.add_argument("config")
    c.add_argument("--grid-step", type=float)
    c.add_argument("--horizon", type=float)
    c.add_argument("--margins", help="margin CSV path (default ./<config>_margins.csv)")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("envelope", help="tabulate a performance function")
    e.add_argument("--phi0", type=float, required=True)
    e.add_argument("--phiInf", type=float, required=True)
    e.add_argument("--kappa", type=float, required=True)
    e.add_argument("--nu", type=float, default=1.0)
    e.add_argument("--eps", type=float, required=True)
    e.add_argument("--horizon", type=float, default=20.0)
    e.add_argument("--step", type=float, default=1.0)
    e.set_defaults(func=cmd_envelope)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
