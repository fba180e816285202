"""Command-line front end: ``lowmach {solve,sweep,mms,check} --config PATH``.

Exit codes: 0 success, 2 configuration or gate error, 3 non-convergence or a
failed threshold.  Numbers go to files in ``--out``; stdout gets one summary
line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, snapshot
from .checks import run_checks
from .config import ConfigError, RunConfig, load
from .errors import NoConvergence, NotSolenoidal, SmallnessGateError
from .fields import mms_forcing, taylor_green, taylor_green_pressure
from .fixedpoint import fixed_point_solve
from .incompressible import solve_advected_stokes, solve_incompressible_ns
from .spectral import SpectralField, SpectralVectorField, gradient, mean_zero_project, sobolev_norm
from .sweep import epsilon_sweep

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 2, 3

log = logging.getLogger("lowmach")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _envelope(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "numpy": np.__version__, "config": cfg.to_dict()}


# --------------------------------------------------------------------- commands

def cmd_solve(cfg: RunConfig, out: Path) -> int:
    f, g = cfg.forcing_fields()
    initial = None
    if cfg.load_state:
        try:
            initial, _ = snapshot.load(cfg.load_state)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load state {cfg.load_state}: {exc}") from None
        if initial.P.grid.n != cfg.n:
            raise ConfigError(f"snapshot grid n={initial.P.grid.n} does not match config n={cfg.n}")
    payload = _envelope(cfg, "solve")
    try:
        rep = fixed_point_solve(f, g, cfg.params(), cfg.solver_options(), initial=initial)
        code = EXIT_OK
    except NoConvergence as exc:
        rep, code = exc.partial, EXIT_FAIL
        payload["error"] = str(exc)
    if rep is None:
        _write_json(out / "report.json", payload)
        print(f"solve: FAILED before any iterate ({payload.get('error')})")
        return code
    payload["report"] = rep.to_dict()
    _write_json(out / "report.json", payload)
    if cfg.save_state:
        snapshot.save(out / cfg.save_state, rep.state, cfg.eps)
    status = "converged" if code == EXIT_OK else "NOT converged"
    print(f"solve: {status} eps={cfg.eps} outer_iters={rep.outer_iters} residual={rep.residual_total:.3e}")
    return code


def cmd_sweep(cfg: RunConfig, out: Path, workers: int) -> int:
    f, g = cfg.forcing_fields()
    table = epsilon_sweep(f, g, cfg.params(cfg.eps_list[0]), cfg.eps_list, cfg.solver_options(), workers=workers)
    table.config = cfg.to_dict()
    (out / "sweep.csv").write_text(table.to_csv(timing=cfg.timing))
    payload = _envelope(cfg, "sweep")
    payload["sweep"] = table.to_dict()
    _write_json(out / "report.json", payload)
    inv = payload["sweep"]["invariants"]
    failed = [k for k, v in inv.items() if v is False]
    slope = table.fits.get("perturbation_total")
    slope_txt = f"{slope.slope:.3f}" if slope else "n/a"
    print(f"sweep: {len(table.rows)} rows, slope={slope_txt}, "
          + ("all invariants hold" if not failed else f"failed: {','.join(failed)}"))
    return EXIT_OK if not failed else EXIT_FAIL


MMS_THRESHOLDS = {"taylor_green": 1e-10, "gradient_force": 1e-12, "stokes_shear": 1e-12}


def _mms_case(cfg: RunConfig) -> dict:
    grid = cfg.grid()
    mu = cfg.mu
    zero = SpectralVectorField.zeros(grid)
    case = cfg.mms_case
    if case == "taylor_green":
        Ustar = taylor_green(grid, 1.0)
        Pstar = taylor_green_pressure(grid, 1.0)
        h = mms_forcing(Ustar, Pstar, mu)
        sol = solve_incompressible_ns(h, zero, None, mu, tol=1e-13, max_iter=cfg.max_inner,
                                      omega=cfg.omega, a0=cfg.a0, force=cfg.force)
    elif case == "gradient_force":
        Pstar = SpectralField.from_function(grid, lambda x, y: np.sin(x) * np.cos(2 * y) + np.cos(3 * y))
        Ustar = zero
        sol = solve_advected_stokes(zero, gradient(Pstar), mu)
    else:
        Ustar = SpectralVectorField((SpectralField.from_function(grid, lambda x, y: np.sin(y) / mu),
                                     SpectralField.zeros(grid)))
        Pstar = SpectralField.zeros(grid)
        rhs = SpectralVectorField((SpectralField.from_function(grid, lambda x, y: np.sin(y)),
                                   SpectralField.zeros(grid)))
        sol = solve_advected_stokes(zero, rhs, mu)
    u_err = sobolev_norm(sol.U - Ustar, 2)
    p_err = sobolev_norm(mean_zero_project(sol.P - Pstar), 1)
    return {"case": case, "U_error_H2": u_err, "P_error_H1": p_err,
            "U_error_L2": sobolev_norm(sol.U - Ustar, 0), "threshold": MMS_THRESHOLDS[case],
            "iterations": sol.picard_iters, "passed": u_err <= MMS_THRESHOLDS[case]}


def cmd_mms(cfg: RunConfig, out: Path) -> int:
    t0 = time.perf_counter()
    row = _mms_case(cfg)
    row["wall_time_s"] = time.perf_counter() - t0
    payload = _envelope(cfg, "mms")
    payload["mms"] = row
    _write_json(out / "report.json", payload)
    print(f"mms {row['case']}: U error {row['U_error_H2']:.3e} (threshold {row['threshold']:.0e}) "
          + ("PASS" if row["passed"] else "FAIL"))
    return EXIT_OK if row["passed"] else EXIT_FAIL


def cmd_check(cfg: RunConfig, out: Path) -> int:
    results = run_checks(cfg)
    payload = _envelope(cfg, "check")
    payload["checks"] = [r.to_dict() for r in results]
    _write_json(out / "report.json", payload)
    failed = [r.name for r in results if not r.passed]
    print(f"check: {len(results) - len(failed)}/{len(results)} properties hold"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_OK if not failed else EXIT_FAIL


# ------------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowmach", description="Steady low-Mach compressible flow on the periodic torus.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("solve", "nonlinear solve at one Mach number"),
                      ("sweep", "solve along the Mach ladder and fit rates"),
                      ("mms", "manufactured-solution check of the incompressible stage"),
                      ("check", "randomized invariant suite")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--config", required=True, help="flat key = value config file")
        sp.add_argument("--out", default=None, help="output directory (default: config 'out')")
        sp.add_argument("--force", action="store_true", help="bypass the smallness gates")
        sp.add_argument("--workers", type=int, default=None, help="sweep worker processes")
        sp.add_argument("--seed", type=int, default=None, help="seed for random probes")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "solve":
            sp.add_argument("--save", default=None, help="write a state snapshot to this file name in --out")
            sp.add_argument("--load", default=None, help="warm start from a state snapshot")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load(args.config)
        over = {}
        if args.force:
            over["force"] = True
        if args.workers is not None:
            over["workers"] = args.workers
        if args.seed is not None:
            over["seed"] = args.seed
        if getattr(args, "save", None):
            over["save_state"] = args.save
        if getattr(args, "load", None):
            over["load_state"] = args.load
        if args.out is not None:
            over["out"] = args.out
        cfg = cfg.with_(**over) if over else cfg
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, cfg.workers)
        if args.command == "mms":
            return cmd_mms(cfg, out)
        return cmd_check(cfg, out)
    except (ConfigError, SmallnessGateError, NotSolenoidal) as exc:
        print(f"{args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
