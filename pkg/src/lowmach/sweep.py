"""Mach-number sweep: solve along a ladder of eps, measure the limit quantities
against one shared incompressible reference, and fit power-law rates."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientData, NoConvergence, SmallnessGateError
from .fields import FluidParams, SplitState, residual_incompressible
from .fixedpoint import SolverOptions, SolveReport, fixed_point_solve
from .incompressible import StokesSolution, solve_incompressible_ns
from .spectral import SpectralField, SpectralVectorField, divergence, leray_project, sobolev_norm

log = logging.getLogger(__name__)

CSV_HEADER = ("eps,norm_v_H3,norm_theta_H3,norm_eta_H2,perturbation_total,div_v_over_eps_H1,"
              "eta_plus_theta_over_eps_H2,u_gap_H3,pressure_gap_H2,residual_total,outer_iters,"
              "wall_time_s,converged").split(",")

REFERENCE_RESIDUAL_TOL = 1e-8


@dataclass
class SweepRow:
    eps: float
    norm_v_H3: float
    norm_theta_H3: float
    norm_eta_H2: float
    perturbation_total: float
    div_v_over_eps_H1: float
    eta_plus_theta_over_eps_H2: float
    u_gap_H3: float
    pressure_gap_H2: float
    residual_total: float
    outer_iters: int
    wall_time_s: float
    converged: bool
    k0_energy: float = float("nan")
    reference_switched: bool = False
    message: str = ""


@dataclass
class RateFit:
    column: str
    slope: float
    intercept: float
    residual: float
    n_rows: int


@dataclass
class SweepTable:
    rows: list[SweepRow]
    reference_residual: float
    fits: dict[str, RateFit] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    reference: tuple[SpectralVectorField, SpectralField] | None = field(default=None, repr=False)

    def column(self, name: str, converged_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.rows if r.converged or not converged_only]
        return (np.array([r.eps for r in rows], dtype=float),
                np.array([getattr(r, name) for r in rows], dtype=float))

    def to_csv(self, timing: bool = False) -> str:
        """CSV text with the fixed header.

        Wall times vary between otherwise identical runs, so unless ``timing``
        is set the ``wall_time_s`` column is written as ``nan`` and the CSV is
        byte-reproducible.  The JSON report always carries the times.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            vals = []
            for name in CSV_HEADER:
                x = getattr(r, name)
                if name == "wall_time_s" and not timing:
                    vals.append("nan")
                elif isinstance(x, bool):
                    vals.append(str(x).lower())
                elif isinstance(x, int):
                    vals.append(str(x))
                else:
                    vals.append(repr(float(x)))
            w.writerow(vals)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "fits": {k: asdict(v) for k, v in self.fits.items()},
            "reference_residual": self.reference_residual,
            "invariants": check_invariants(self),
            "config": self.config,
        }


def limit_compare(state: SplitState, reference: tuple[SpectralVectorField, SpectralField],
                  eps: float) -> tuple[float, float]:
    """``||U + v - Ubar||_3`` and ``||P + (eta + theta)/eps - Pbar||_2``."""
    Ubar, Pbar = reference
    u_gap = sobolev_norm(state.U + state.v - Ubar, 3)
    p_gap = sobolev_norm(state.P + (state.eta + state.theta) / eps - Pbar, 2)
    return u_gap, p_gap


def fit_rate(table: SweepTable, column: str) -> RateFit:
    """Least-squares slope of ``log(column)`` against ``log(eps)`` over converged rows.

    Raises:
        InsufficientData: fewer than three finite positive entries.
    """
    eps, y = table.column(column)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 3:
        raise InsufficientData(f"fit_rate({column}) needs >= 3 finite positive entries, got {int(ok.sum())}")
    lx, ly = np.log(eps[ok]), np.log(y[ok])
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(res[0]) if len(res) else 0.0
    return RateFit(column, float(slope), float(intercept), resid, int(ok.sum()))


def _row(eps: float, rep: SolveReport, reference, converged: bool, message: str = "") -> SweepRow:
    s = rep.state
    nv, nt, ne = sobolev_norm(s.v, 3), sobolev_norm(s.theta, 3), sobolev_norm(s.eta, 2)
    u_gap, p_gap = limit_compare(s, reference, eps)
    return SweepRow(
        eps=eps, norm_v_H3=nv, norm_theta_H3=nt, norm_eta_H2=ne, perturbation_total=nv + nt + ne,
        div_v_over_eps_H1=sobolev_norm(divergence(s.v) / eps, 1),
        eta_plus_theta_over_eps_H2=sobolev_norm((s.eta + s.theta) / eps, 2),
        u_gap_H3=u_gap, pressure_gap_H2=p_gap, residual_total=rep.residual_total,
        outer_iters=rep.outer_iters, wall_time_s=rep.wall_time, converged=converged,
        k0_energy=rep.residual["k0"].get("energy", float("nan")), message=message)


def _nan_row(eps: float, message: str) -> SweepRow:
    nan = float("nan")
    return SweepRow(eps, nan, nan, nan, nan, nan, nan, nan, nan, nan, 0, nan, False, message=message)


def _solve_one(args):
    f, g, p, opts = args
    try:
        return fixed_point_solve(f, g, p, opts), ""
    except NoConvergence as exc:
        return exc.partial, str(exc)
    except Exception as exc:  # one bad row must not sink the sweep
        return None, f"{type(exc).__name__}: {exc}"


def epsilon_sweep(f: SpectralVectorField, g: SpectralVectorField, p_base: FluidParams,
                  eps_list, opts: SolverOptions = SolverOptions(), workers: int = 1,
                  branch_tol: float = 0.5) -> SweepTable:
    """Run one nonlinear solve per ``eps`` and tabulate the limit quantities.

    All rows share the incompressible reference ``(Ubar, Pbar)`` solved once
    from zero.  If a row's velocity lies farther than ``branch_tol`` (H^3,
    relative to ``||Ubar||_3``) from it, the solver has evidently found a
    different steady branch; the row is then compared against the Leray
    projection of its own velocity and ``P + (eta+theta)/eps`` and flagged
    ``reference_switched``.

    Rows are independent and may run in ``workers`` processes; the table is
    always assembled in ``eps_list`` order.

    Raises:
        ValueError: ``eps_list`` empty or not strictly decreasing.
        SmallnessGateError: an entry exceeds ``opts.eps0`` without ``force``.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError(f"eps_list must be strictly decreasing: {eps_list}")
    bad = [e for e in eps_list if e > opts.eps0]
    if bad and not opts.force:
        raise SmallnessGateError(f"eps values {bad} exceed eps0 = {opts.eps0} (use force to bypass)")
    params = [p_base.with_eps(e) for e in eps_list]

    ref: StokesSolution = solve_incompressible_ns(
        f, g, None, p_base.mu, tol=opts.tol * opts.inner_factor, max_iter=opts.max_inner,
        omega=opts.omega, a0=opts.a0, force=opts.force)
    ref_res = residual_incompressible(ref.U, ref.P, f, g, p_base.mu).total
    if ref_res > REFERENCE_RESIDUAL_TOL:
        log.warning("reference residual %.3e exceeds %.0e; gaps are untrustworthy", ref_res, REFERENCE_RESIDUAL_TOL)
    reference = (ref.U, ref.P)
    ref_scale = max(sobolev_norm(ref.U, 3), 1e-300)

    jobs = [(f, g, p, opts) for p in params]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]

    rows = []
    for eps, (rep, msg) in zip(eps_list, results):
        if rep is None:
            rows.append(_nan_row(eps, msg))
            continue
        row = _row(eps, rep, reference, rep.converged and not msg, msg)
        if math.isfinite(row.u_gap_H3) and row.u_gap_H3 > branch_tol * ref_scale:
            s = rep.state
            own = (leray_project(s.U + s.v), s.P + (s.eta + s.theta) / eps)
            row = _row(eps, rep, own, row.converged, msg)
            row.reference_switched = True
            log.warning("eps=%g: solution left the reference branch; compared to its own projection", eps)
        rows.append(row)

    table = SweepTable(rows, ref_res, reference=reference)
    for col in ("perturbation_total", "div_v_over_eps_H1", "eta_plus_theta_over_eps_H2",
                "u_gap_H3", "pressure_gap_H2"):
        try:
            table.fits[col] = fit_rate(table, col)
        except InsufficientData:
            pass
    return table


def _strictly_decreasing(y) -> bool:
    return bool(np.all(np.isfinite(y))) and all(b < a for a, b in zip(y, y[1:]))


def _shrinks(eps, y, factor=2.0, span=8.0) -> bool | None:
    if len(y) < 2 or eps[0] / eps[-1] < span:
        return None
    return bool(y[-1] * factor <= y[0])


def check_invariants(table: SweepTable) -> dict[str, bool | None]:
    """Sweep-level properties; ``None`` marks a property that does not apply."""
    out: dict[str, bool | None] = {"all_converged": all(r.converged for r in table.rows),
                                   "reference_residual": table.reference_residual <= REFERENCE_RESIDUAL_TOL}
    eps, pt = table.column("perturbation_total")
    out["perturbation_total_decreasing"] = _strictly_decreasing(pt) if len(pt) > 1 else None
    fit = table.fits.get("perturbation_total")
    out["perturbation_rate"] = None if fit is None else bool(0.8 <= fit.slope <= 1.2)
    for col in ("eta_plus_theta_over_eps_H2", "div_v_over_eps_H1"):
        _, y = table.column(col)
        out[f"{col}_halves"] = _shrinks(eps, y)
    for col in ("u_gap_H3", "pressure_gap_H2"):
        _, y = table.column(col)
        out[f"{col}_decreasing"] = _strictly_decreasing(y) if len(y) > 1 else None
    # the discarded energy mean is quadratic in eps: >= 4x smaller per halving
    _, k0 = table.column("k0_energy")
    steps = [(a, b, ya, yb) for a, b, ya, yb in zip(eps, eps[1:], k0, k0[1:]) if abs(a / b - 2) < 1e-12]
    out["k0_energy_quartered"] = None if not steps else all(yb * 4 <= ya for _, _, ya, yb in steps)
    return out
