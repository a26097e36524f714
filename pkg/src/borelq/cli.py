"""Command-line entry point: ``borelq evolve|verify|check-field|gauge-fit|sweep``.

Exit codes: 0 success, 1 checks failed, 2 invalid input/config, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .bundle import FieldError, check_constant_field
from .config import ConfigError, RunConfig, load_config
from .dynamics import DynamicsError, EvolutionAbort, evolve
from .gauge import COLUMNS, FitError, GaugeError, linearization_fit
from .geometry import Grid, ManifoldSpec
from .suites import SUITES, run_suite

log = logging.getLogger("borelq")

OUTPUT_ROOT_ENV = "BORELQ_OUTPUT_ROOT"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _output_root(args) -> str | None:
    return getattr(args, "output_root", None) or os.environ.get(OUTPUT_ROOT_ENV)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def write_run(cfg: RunConfig, result, aborted: str | None = None) -> dict:
    """Write snapshots, diagnostics CSV, summary JSON and optional plots."""
    out = cfg.output_dir
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for old in snap_dir.glob("snap_*.bin"):
        old.unlink()
    for i, (t, psi) in enumerate(zip(result.times, result.snapshots)):
        io.write_snapshot(snap_dir / f"snap_{i:06d}.bin", cfg.grid, t, psi)
    io.write_diagnostics(out / "diagnostics.csv", result)
    summary = io.summary(result)
    summary["seed"] = cfg.seed
    summary["aborted"] = aborted
    io.write_json(out / "summary.json", summary)
    if cfg.plots:
        from .plots import plot_density, plot_diagnostics

        plot_density(out / "density.svg", cfg.grid, result)
        plot_diagnostics(out / "diagnostics.svg", result)
    return summary


def run_evolve(path: str, output_root: str | None = None) -> tuple[int, str]:
    try:
        cfg = load_config(path, output_root)
    except ConfigError as exc:
        return EXIT_CONFIG, f"invalid config {path}: {exc}"
    try:
        result = evolve(cfg.psi0, cfg.params, cfg.T, cfg.probes, cfg.snapshot_every)
    except EvolutionAbort as exc:
        write_run(cfg, exc.result, str(exc))
        return EXIT_ABORT, f"run aborted: {exc}; partial diagnostics in {cfg.output_dir}"
    except DynamicsError as exc:
        return EXIT_CONFIG, f"invalid config {path}: {exc} (precondition owned by dynamics)"
    summary = write_run(cfg, result)
    return EXIT_OK, (f"wrote {summary['snapshots']} snapshots to {cfg.output_dir}; "
                     f"norm drift {summary['norm_drift']:.3e}, max fp residual {summary['max_fp_residual']:.3e}")


def cmd_evolve(args) -> int:
    code, msg = run_evolve(args.config, _output_root(args))
    print(msg, file=sys.stderr if code else sys.stdout)
    return code


def cmd_verify(args) -> int:
    try:
        checks = run_suite(args.suite)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_CONFIG
    rows = [c.as_dict() for c in checks]
    passed = all(r["passed"] for r in rows)
    _emit({"suite": args.suite, "passed": passed, "checks": rows}, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_check_field(args) -> int:
    for name in ("phi0", "e", "hbar"):
        if not math.isfinite(getattr(args, name)):
            print(f"--{name} must be finite", file=sys.stderr)
            return EXIT_CONFIG
    try:
        grid = Grid.uniform(ManifoldSpec.torus2(tuple(args.extents)), args.points)
        report = check_constant_field(args.phi0, args.e, args.hbar, grid, args.tol)
    except (FieldError, ValueError) as exc:
        print(f"invalid field: {exc} (precondition owned by bundle)", file=sys.stderr)
        return EXIT_CONFIG
    report = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in report.items()}
    _emit({"phi0": args.phi0, "e": args.e, "hbar": args.hbar, "extents": list(args.extents), **report}, args.out)
    return EXIT_OK


def cmd_gauge_fit(args) -> int:
    try:
        cfg = load_config(args.config, _output_root(args))
    except ConfigError as exc:
        print(f"invalid config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.ablate not in COLUMNS:
        print(f"invalid config: [gauge] ablate must be one of {COLUMNS} (precondition owned by gauge)", file=sys.stderr)
        return EXIT_CONFIG
    dt = cfg.params.dt
    try:
        result = evolve(cfg.psi0, cfg.params, dt * (cfg.fit_snapshots - 1), snapshot_every=1)
    except EvolutionAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    rows = []
    for g in cfg.gauges:
        try:
            fit = linearization_fit(result.snapshots, result.dt, g, cfg.params)
            reduced = tuple(c for c in COLUMNS if c != cfg.ablate)
            ablated = linearization_fit(result.snapshots, result.dt, g, cfg.params, reduced)
        except (GaugeError, FitError) as exc:
            print(f"gauge fit failed for (lambda={g.lam}, gamma={g.gamma}): {exc}", file=sys.stderr)
            return EXIT_ABORT
        rows.append({
            "lambda": g.lam,
            "gamma": g.gamma,
            "coefficients": fit.coefficients,
            "equation": fit.as_equation(cfg.params.hbar),
            "residual": fit.residual,
            "condition": fit.condition,
            "ablated_column": cfg.ablate,
            "ablated_residual": ablated.residual,
        })
    payload = {"config": str(args.config), "dt": result.dt, "snapshots": len(result.snapshots), "fits": rows}
    out = args.out
    if out is None:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        out = str(cfg.output_dir / "gauge_fit.json")
    _emit(payload, out)
    return EXIT_OK


def _sweep_one(job):
    path, root = job
    return str(path), *run_evolve(str(path), root)


def cmd_sweep(args) -> int:
    configs = sorted(Path(args.dir).glob("*.toml"))
    if not configs:
        print(f"no *.toml configs in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    root = _output_root(args)
    jobs = [(p, root) for p in configs]
    if args.workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    for path, code, msg in results:
        print(f"{path}: exit {code}: {msg}")
    return max(code for _, code, _ in results)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="borelq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("evolve", help="integrate one configured run")
    s.add_argument("config")
    s.add_argument("--output-root", help=f"base for relative output dirs (overrides ${OUTPUT_ROOT_ENV})")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("verify", help="run a verification suite")
    s.add_argument("suite", help=f"one of {', '.join([*SUITES, 'all'])}")
    s.add_argument("--out", help="also write the JSON report here")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("check-field", help="admissibility of a constant field on the 2-torus")
    s.add_argument("--phi0", type=float, required=True)
    s.add_argument("--e", type=float, required=True)
    s.add_argument("--hbar", type=float, default=1.0)
    s.add_argument("--extents", type=float, nargs=2, default=(2 * math.pi, 2 * math.pi))
    s.add_argument("--points", type=int, default=16)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--out")
    s.set_defaults(func=cmd_check_field)

    s = sub.add_parser("gauge-fit", help="fit gauge-transformed runs to the equation family")
    s.add_argument("config")
    s.add_argument("--output-root")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gauge_fit)

    s = sub.add_parser("sweep", help="evolve every *.toml in a directory concurrently")
    s.add_argument("dir")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--output-root")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
