"""Outer fixed-point iteration coupling the incompressible and compressible solves."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .compressible import LinearizedOptions, LinearizedSolution, solve_linearized
from .errors import InsufficientData, NoConvergence, SmallnessGateError
from .fields import (
    CompositeState,
    FluidParams,
    SplitState,
    compose,
    residual_primitive,
    residual_transformed,
)
from .incompressible import k0_report, solve_advected_stokes, solve_incompressible_ns
from .spectral import SpectralVectorField, sobolev_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the full nonlinear solve.

    ``tol`` is the outer stopping tolerance on :class:`IterateDiff`; inner
    solves run ``inner_factor`` times tighter.  ``a0``, ``gate``, ``E`` and
    ``eps0`` are the smallness gates; ``force`` bypasses all of them.
    """

    tol: float = 1e-10
    max_outer: int = 200
    max_inner: int = 2000
    omega: float = 1.0
    delta: float = 0.0
    a0: float = 0.5
    gate: float = 0.5
    E: float = 0.5
    eps0: float = 0.25
    inner_factor: float = 1e-3
    force: bool = False

    def linearized(self) -> LinearizedOptions:
        return LinearizedOptions(delta=self.delta, tol=self.tol * self.inner_factor,
                                 max_iter=self.max_inner, omega=self.omega, gate=self.gate,
                                 eps0=self.eps0, force=self.force)


@dataclass
class IterateDiff:
    dU_H1: float
    dv_H1: float
    dtheta_H1: float
    deta_L2: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.dU_H1 + self.dv_H1 + self.dtheta_H1 + self.deta_L2

    @classmethod
    def between(cls, a: SplitState, b: SplitState) -> "IterateDiff":
        return cls(sobolev_norm(a.U - b.U, 1), sobolev_norm(a.v - b.v, 1),
                   sobolev_norm(a.theta - b.theta, 1), sobolev_norm(a.eta - b.eta, 0))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class KMembership:
    K0_ratios: dict[int, float]
    v_theta_H3: float
    E_gate: float
    inside_K1: bool = field(init=False)

    def __post_init__(self):
        self.inside_K1 = bool(self.v_theta_H3 <= self.E_gate)

    def to_dict(self) -> dict:
        return {"K0_ratios": {str(k): v for k, v in self.K0_ratios.items()},
                "v_theta_H3": self.v_theta_H3, "E_gate": self.E_gate, "inside_K1": self.inside_K1}


def membership(s: SplitState, h: SpectralVectorField, E: float) -> KMembership:
    return KMembership(k0_report(s.U, s.P, h).ratios,
                       sobolev_norm(s.v, 3) + sobolev_norm(s.theta, 3), E)


@dataclass
class ContractionReport:
    ratios: list[float]
    geometric: bool

    def to_dict(self) -> dict:
        return {"ratios": self.ratios, "geometric": self.geometric}


def contraction_report(diffs: list[IterateDiff], noise_floor: float = 0.0) -> ContractionReport:
    """Successive ratios ``total[i+1] / total[i]`` of the iterate differences.

    ``geometric`` is true when every ratio from the third onward is below one
    (all ratios when there are at most two).  Ratios whose denominator sits at
    or below ``noise_floor`` are reported but not judged.

    Raises:
        InsufficientData: fewer than three differences.
    """
    if len(diffs) < 3:
        raise InsufficientData(f"contraction_report needs >= 3 iterations, got {len(diffs)}")
    totals = [d.total for d in diffs]
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(totals, totals[1:])]
    judged = [r for r, a in zip(ratios, totals) if a > noise_floor]
    tail = judged[2:] if len(judged) > 2 else judged
    return ContractionReport(ratios, all(r < 1 for r in tail))


@dataclass
class SolveReport:
    state: SplitState
    composite: CompositeState
    params: FluidParams
    options: SolverOptions
    outer_iters: int
    diffs: list[IterateDiff]
    contraction: ContractionReport | None
    residual_total: float
    residual_primitive_total: float
    residual: dict
    k0_discard: list[tuple[float, float, float]]
    membership: list[KMembership]
    inner_iters: list[int]
    wall_time: float
    converged: bool
    message: str = ""

    @property
    def perturbation_norms(self) -> dict[str, float]:
        s = self.state
        return {"v_H3": sobolev_norm(s.v, 3), "theta_H3": sobolev_norm(s.theta, 3),
                "eta_H2": sobolev_norm(s.eta, 2)}

    def to_dict(self, timing: bool = True) -> dict:
        s = self.state
        out = {
            "converged": self.converged,
            "message": self.message,
            "params": {"mu": self.params.mu, "lambda": self.params.lam, "kappa": self.params.kappa,
                       "eps": self.params.eps},
            "options": dict(self.options.__dict__),
            "outer_iters": self.outer_iters,
            "inner_iters": self.inner_iters,
            "residual_transformed_total": self.residual_total,
            "residual_primitive_total": self.residual_primitive_total,
            "residual": self.residual,
            "norms": {
                "U_H1": sobolev_norm(s.U, 1), "U_H3": sobolev_norm(s.U, 3), "P_H2": sobolev_norm(s.P, 2),
                **self.perturbation_norms,
            },
            "diffs": [d.to_dict() for d in self.diffs],
            "contraction": self.contraction.to_dict() if self.contraction else None,
            "k0_discard": [list(k) for k in self.k0_discard],
            "membership": [m.to_dict() for m in self.membership],
        }
        if timing:
            out["wall_time_s"] = self.wall_time
        return out


def map_N(current: SplitState, f: SpectralVectorField, g: SpectralVectorField, p: FluidParams,
          opts: SolverOptions = SolverOptions()) -> tuple[SplitState, LinearizedSolution]:
    """One application of the outer map.

    The advected Stokes problem with ``a = U~ + v~`` and ``h = f + g`` gives
    ``(U, P)``; the linearized compressible problem with those and the lagged
    ``(v~, theta~)`` gives ``(eta, v, theta)``.  ``P`` and ``eta`` of
    ``current`` only serve as warm starts.

    Raises:
        NoConvergence: from either stage, with ``stage`` prefixed ``map_N/``.
    """
    h = f + g
    try:
        st = solve_advected_stokes(current.U + current.v, h, p.mu, tol=opts.tol * opts.inner_factor,
                                   max_iter=opts.max_inner, omega=opts.omega, a0=opts.a0,
                                   force=opts.force, U0=current.U)
    except NoConvergence as exc:
        raise NoConvergence(f"map_N/{exc.stage}", exc.iterations, exc.last_update, exc.history,
                            partial=exc.partial, reason=exc.reason) from exc
    x0 = LinearizedSolution(current.eta, current.v, current.theta)
    try:
        lin = solve_linearized(st.U, st.P, current.v, current.theta, f, p, opts.linearized(), x0=x0)
    except NoConvergence as exc:
        raise NoConvergence(f"map_N/{exc.stage}", exc.iterations, exc.last_update, exc.history,
                            partial=exc.partial, reason=exc.reason) from exc
    return SplitState(st.U, st.P, lin.v, lin.eta, lin.theta), lin


def fixed_point_solve(f: SpectralVectorField, g: SpectralVectorField, p: FluidParams,
                      opts: SolverOptions = SolverOptions(),
                      initial: SplitState | None = None) -> SolveReport:
    """Iterate :func:`map_N` to a fixed point and verify the composed state.

    The default start is the incompressible solution with zero correction.
    Convergence: :class:`IterateDiff` total below ``opts.tol`` and the
    transformed-system residual of the composed state at most ``10 * tol``.

    Raises:
        SmallnessGateError: ``p.eps > opts.eps0`` without ``force``.
        NoConvergence: ``partial`` holds a :class:`SolveReport` of the last iterate.
    """
    if p.eps > opts.eps0 and not opts.force:
        raise SmallnessGateError(f"eps = {p.eps} exceeds eps0 = {opts.eps0} (use force to bypass)")
    t0 = time.perf_counter()
    h = f + g
    if initial is None:
        ns = solve_incompressible_ns(f, g, None, p.mu, tol=opts.tol * opts.inner_factor,
                                     max_iter=opts.max_inner, omega=opts.omega, a0=opts.a0, force=opts.force)
        zero = SplitState.zeros(f.grid)
        state = replace(zero, U=ns.U, P=ns.P)
    else:
        state = initial

    diffs: list[IterateDiff] = []
    k0_hist: list[tuple[float, float, float]] = []
    members: list[KMembership] = []
    inner: list[int] = []
    failure = None
    for it in range(1, opts.max_outer + 1):
        try:
            nxt, lin = map_N(state, f, g, p, opts)
        except NoConvergence as exc:
            failure = exc
            break
        d = IterateDiff.between(nxt, state)
        diffs.append(d)
        k0_hist.append(lin.k0_discard)
        inner.append(lin.inner_iters)
        members.append(membership(nxt, h, opts.E))
        state = nxt
        log.debug("outer %d: diff %.3e (inner %d)", it, d.total, lin.inner_iters)
        if d.total < opts.tol:
            break
        if not np.isfinite(d.total):
            failure = NoConvergence("fixed_point", it, d.total, [x.total for x in diffs], reason="non-finite iterate")
            break

    report = _finish(state, f, g, p, opts, diffs, k0_hist, members, inner, time.perf_counter() - t0)
    if failure is not None:
        report.message = str(failure)
        raise NoConvergence("fixed_point", len(diffs), failure.last_update,
                            [x.total for x in diffs], partial=report, reason=str(failure)) from failure
    if not diffs or diffs[-1].total >= opts.tol:
        report.message = "max_outer reached"
        last = diffs[-1].total if diffs else float("nan")
        raise NoConvergence("fixed_point", len(diffs), last, [x.total for x in diffs], partial=report)
    if not report.converged:
        report.message = f"residual {report.residual_total:.3e} above 10*tol"
        raise NoConvergence("fixed_point", len(diffs), diffs[-1].total, [x.total for x in diffs],
                            partial=report, reason=report.message)
    return report


def _finish(state, f, g, p, opts, diffs, k0_hist, members, inner, wall) -> SolveReport:
    comp = compose(state, p)
    # recomputed from scratch on the final state
    res = residual_transformed(comp, p, f, g)
    try:
        prim = residual_primitive(comp, p, f, g).total
    except ValueError:
        prim = float("nan")
    try:
        contraction = contraction_report(diffs, noise_floor=opts.tol)
    except InsufficientData:
        contraction = None
    converged = bool(diffs) and diffs[-1].total < opts.tol and res.total <= 10 * opts.tol
    return SolveReport(state, comp, p, opts, len(diffs), diffs, contraction, res.total, prim,
                       res.to_dict(), k0_hist, members, inner, wall, converged)
