"""Linearized compressible correction solve and its energy diagnostics.

Given the incompressible part ``(U, P)`` and lagged correction fields
``(v_tilde, theta_tilde)``, find ``(eta, v, theta)`` with

    mass    -delta lap eta + U.grad eta + div v / eps + vt.grad eta + eta div vt
                = -eps div(P (U + vt))
    moment  U.grad v - mu lap v - zeta grad div v + grad(eta + theta) / eps
                + tt grad eta + eta grad tt = eps F - vt.grad vt
    energy  U.grad theta - kappa lap theta + div v / eps + eta div vt
                = eps G - vt.grad tt - tt div vt

with ``vt = v_tilde``, ``tt = theta_tilde``, ``rho = eps P + eta`` and

    F = rho f - rho (U+vt).grad(U+vt) - tt grad P - P grad tt
    G = Psi(U+vt) - rho (U+vt).grad tt - (rho tt) div vt - P div vt.

The constant-coefficient part (``1/eps`` coupling, diffusion, ``delta``) is
inverted exactly per Fourier mode; every variable-coefficient term, including
the ``eta``-dependent pieces of ``F`` and ``G``, is lagged in an inner Picard
loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMode, InnerDivergence, NoConvergence, SmallnessGateError
from .fields import FluidParams, dissipation
from .spectral import (
    MEAN_TOL,
    Grid,
    SpectralField,
    SpectralVectorField,
    advect,
    dealiased_product,
    divergence,
    gradient,
    inner,
    inverse_laplacian,
    laplacian,
    mean_zero_project,
    random_field,
    random_vector,
    scale,
    sobolev_norm,
)

log = logging.getLogger(__name__)

OMEGA_FLOOR = 0.1
GROWTH_LIMIT = 1e8   # update this far above its running minimum counts as divergence


@dataclass(frozen=True)
class CompressibleRHS:
    r_mass: SpectralField
    r_mom: SpectralVectorField
    r_energy: SpectralField

    def project(self) -> tuple["CompressibleRHS", tuple[float, float, float]]:
        """Drop the k = 0 modes; return the projected rhs and the dropped magnitudes."""
        dropped = (
            abs(complex(self.r_mass.coeffs[0, 0])),
            float(np.hypot(*[abs(complex(c.coeffs[0, 0])) for c in self.r_mom])),
            abs(complex(self.r_energy.coeffs[0, 0])),
        )
        return (CompressibleRHS(mean_zero_project(self.r_mass), mean_zero_project(self.r_mom),
                                mean_zero_project(self.r_energy)), dropped)


@dataclass
class LinearizedSolution:
    eta: SpectralField
    v: SpectralVectorField
    theta: SpectralField
    inner_iters: int = 0
    k0_discard: tuple[float, float, float] = (0.0, 0.0, 0.0)
    history: list[float] = field(default_factory=list, repr=False)
    residual: float = float("nan")

    @classmethod
    def zeros(cls, grid: Grid) -> "LinearizedSolution":
        z = SpectralField.zeros(grid)
        return cls(z, SpectralVectorField.zeros(grid), z)

    def h1_distance(self, other: "LinearizedSolution") -> float:
        return (sobolev_norm(self.eta - other.eta, 1) + sobolev_norm(self.v - other.v, 1)
                + sobolev_norm(self.theta - other.theta, 1))


@dataclass
class EnergyDiagnostics:
    B_quadratic: float
    lower_bound_norms: float
    coercivity_ratio: float
    skew_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CoercivitySummary:
    min_ratio: float
    trials: int
    worst: EnergyDiagnostics | None
    inside_gate: bool

    def to_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "trials": self.trials, "inside_gate": self.inside_gate,
                "worst": self.worst.to_dict() if self.worst else None}


@dataclass(frozen=True)
class LinearizedOptions:
    delta: float = 0.0
    tol: float = 1e-11
    max_iter: int = 2000
    omega: float = 1.0
    gate: float = 0.5
    eps0: float = 0.25
    force: bool = False


# forcing ----------------------------------------------------------------------

def assemble_FG(P: SpectralField, U: SpectralVectorField, v_tilde: SpectralVectorField,
                theta_tilde: SpectralField, eta_lag: SpectralField, f: SpectralVectorField,
                p: FluidParams) -> tuple[SpectralVectorField, SpectralField]:
    """Evaluate the effective force ``F`` and heat source ``G`` (see module docstring)."""
    w = U + v_tilde
    rho = P * p.eps + eta_lag
    A = advect(w, w)
    F = scale(rho, f) - scale(rho, A) - scale(theta_tilde, gradient(P)) - scale(P, gradient(theta_tilde))
    divvt = divergence(v_tilde)
    G = (dissipation(w, p) - dealiased_product(rho, advect(w, theta_tilde))
         - dealiased_product(dealiased_product(rho, theta_tilde), divvt)
         - dealiased_product(P, divvt))
    return F, G


# principal operator -------------------------------------------------------------

def principal_mode_solve(rhs: CompressibleRHS, p: FluidParams, delta: float = 0.0) -> LinearizedSolution:
    """Invert the constant-coefficient operator mode by mode.

    Per wavevector ``k`` (``s2 = |k|^2``, ``kv = k . v_hat``) the operator is

        mass    delta s2 eta + i kv / eps                       = r_m
        moment  mu s2 v + zeta k kv + i k (eta + theta) / eps   = r_v
        energy  kappa s2 theta + i kv / eps                     = r_e

    For ``delta = 0`` it is block-triangular: mass gives ``kv``, energy minus
    mass gives ``theta``, the longitudinal momentum gives ``eta + theta`` and
    the transverse momentum gives the solenoidal part of ``v``.  For
    ``delta > 0`` the longitudinal 3x3 block is eliminated in closed form.

    Raises:
        DegenerateMode: if the rhs carries a k = 0 component.
    """
    g = rhs.r_mass.grid
    rm = rhs.r_mass.coeffs
    rv = rhs.r_mom.coeffs
    re = rhs.r_energy.coeffs
    if max(abs(rm[0, 0]), abs(rv[0, 0, 0]), abs(rv[1, 0, 0]), abs(re[0, 0])) > MEAN_TOL:
        raise DegenerateMode("k = 0 mode reached the per-mode inversion; project the rhs first")
    eps, mu, zeta, kappa = p.eps, p.mu, p.zeta, p.kappa
    kx, ky = g.k_deriv
    s2 = kx * kx + ky * ky
    nz = s2 > 0
    inv = np.zeros_like(s2)
    inv[nz] = 1.0 / s2[nz]
    kr = kx * rv[0] + ky * rv[1]

    if delta == 0.0:
        kv = -1j * eps * rm
        theta = (re - rm) * inv / kappa
        eta = -1j * eps * (kr * inv - (mu + zeta) * kv) - theta
    else:
        a = 1.0 / delta + 1.0 / kappa
        kv = (kr - (1j / eps) * (rm / delta + re / kappa)) / ((mu + zeta) * s2 + a / eps**2)
        kv = np.where(nz, kv, 0.0)
        eta = (rm - 1j * kv / eps) * inv / delta
        theta = (re - 1j * kv / eps) * inv / kappa
    vT = [(rv[i] - (kx, ky)[i] * kr * inv) * inv / mu for i in range(2)]
    v = [vT[i] + (kx, ky)[i] * kv * inv for i in range(2)]
    for arr in (eta, theta, *v):
        arr[~nz] = 0.0
    return LinearizedSolution(SpectralField(g, eta), SpectralVectorField.from_arrays(g, v),
                              SpectralField(g, theta))


def apply_principal(x: LinearizedSolution, p: FluidParams, delta: float = 0.0) -> CompressibleRHS:
    """Forward action of the constant-coefficient operator (used for residuals)."""
    eps = p.eps
    divv = divergence(x.v)
    gsum = gradient(x.eta + x.theta)
    r_m = divv / eps - laplacian(x.eta) * delta
    r_v = -laplacian(x.v) * p.mu - gradient(divv) * p.zeta + gsum / eps
    r_e = -laplacian(x.theta) * p.kappa + divv / eps
    return CompressibleRHS(r_m, r_v, r_e)


# variable-coefficient pieces ----------------------------------------------------

@dataclass(frozen=True)
class _Coefficients:
    """Frozen coefficient fields of one linearized problem."""

    U: SpectralVectorField
    P: SpectralField
    vt: SpectralVectorField
    tt: SpectralField
    f: SpectralVectorField
    p: FluidParams
    w: SpectralVectorField
    A: SpectralVectorField          # (U+vt).grad(U+vt)
    Bt: SpectralField               # (U+vt).grad tt
    divvt: SpectralField
    grad_tt: SpectralVectorField

    @classmethod
    def build(cls, U, P, vt, tt, f, p):
        w = U + vt
        return cls(U, P, vt, tt, f, p, w, advect(w, w), advect(w, tt), divergence(vt), gradient(tt))


def _source(c: _Coefficients) -> CompressibleRHS:
    """Right-hand side with the ``eta``-free parts of ``F`` and ``G``."""
    p, eps = c.p, c.p.eps
    zero = SpectralField.zeros(c.P.grid)
    F0, G0 = assemble_FG(c.P, c.U, c.vt, c.tt, zero, c.f, p)
    r_m = -divergence(scale(c.P, c.w)) * eps
    r_v = F0 * eps - advect(c.vt, c.vt)
    r_e = G0 * eps - advect(c.vt, c.tt) - dealiased_product(c.tt, c.divvt)
    return CompressibleRHS(r_m, r_v, r_e)


def _lagged(x: LinearizedSolution, c: _Coefficients) -> CompressibleRHS:
    """Variable-coefficient operator applied to ``x`` (moved to the rhs with a minus sign)."""
    eps = c.p.eps
    eta, v, th = x.eta, x.v, x.theta
    geta = gradient(eta)
    n_m = advect(c.U, eta) + advect(c.vt, eta) + dealiased_product(eta, c.divvt)
    n_v = (advect(c.U, v) + scale(c.tt, geta) + scale(eta, c.grad_tt)
           - (scale(eta, c.f) - scale(eta, c.A)) * eps)
    n_e = (advect(c.U, th) + dealiased_product(eta, c.divvt)
           + (dealiased_product(eta, c.Bt) + dealiased_product(dealiased_product(eta, c.tt), c.divvt)) * eps)
    return CompressibleRHS(n_m, n_v, n_e)


def _combine(b: CompressibleRHS, n: CompressibleRHS, sign: float = -1.0) -> CompressibleRHS:
    return CompressibleRHS(b.r_mass + n.r_mass * sign, b.r_mom + n.r_mom * sign,
                           b.r_energy + n.r_energy * sign)


def linearized_residual(x: LinearizedSolution, U, P, v_tilde, theta_tilde, f, p: FluidParams,
                        delta: float = 0.0) -> tuple[CompressibleRHS, tuple[float, float, float]]:
    """Full residual ``L x - b`` of the linearized system with k = 0 removed.

    Every term is evaluated directly, ``1/eps`` terms included.  Returns the
    projected residual and the magnitudes of its dropped k = 0 modes.
    """
    c = _Coefficients.build(U, P, v_tilde, theta_tilde, f, p)
    lhs = _combine(apply_principal(x, p, delta), _lagged(x, c), +1.0)
    return _combine(lhs, _source(c), -1.0).project()


def residual_norm(r: CompressibleRHS) -> float:
    return float(np.sqrt(sobolev_norm(r.r_mass, 0) ** 2 + sobolev_norm(r.r_mom, 0) ** 2
                         + sobolev_norm(r.r_energy, 0) ** 2))


def _relax(new: LinearizedSolution, old: LinearizedSolution, w: float) -> LinearizedSolution:
    if w == 1.0:
        return new
    return LinearizedSolution(old.eta * (1 - w) + new.eta * w, old.v * (1 - w) + new.v * w,
                              old.theta * (1 - w) + new.theta * w)


def check_gates(v_tilde, theta_tilde, p: FluidParams, opts: LinearizedOptions):
    if opts.force:
        return
    if p.eps > opts.eps0:
        raise SmallnessGateError(f"eps = {p.eps} exceeds eps0 = {opts.eps0}")
    s = sobolev_norm(v_tilde, 3) + sobolev_norm(theta_tilde, 3)
    if s > opts.gate:
        raise SmallnessGateError(f"||v~||_3 + ||theta~||_3 = {s:.3g} exceeds gate {opts.gate}")


def solve_linearized(U: SpectralVectorField, P: SpectralField, v_tilde: SpectralVectorField,
                     theta_tilde: SpectralField, f: SpectralVectorField, p: FluidParams,
                     opts: LinearizedOptions = LinearizedOptions(),
                     x0: LinearizedSolution | None = None) -> LinearizedSolution:
    """Inner Picard for the linearized compressible system.

    ``x_{n+1} = (1-w) x_n + w L0^{-1}(b - N x_n)`` where ``L0`` is the
    per-mode principal operator (plus ``delta |k|^2`` on the mass row) and
    ``N`` collects the variable-coefficient terms.  ``w`` starts at
    ``opts.omega`` and halves (floor 0.1) when the update grows.  Stops when
    the H1 update drops below ``opts.tol``.

    Raises:
        SmallnessGateError: eps or the lagged fields exceed their gates.
        InnerDivergence: the update doubled on two consecutive steps, grew
            ``GROWTH_LIMIT``-fold above its smallest value, or went non-finite.
        NoConvergence: ``opts.max_iter`` reached.
    """
    check_gates(v_tilde, theta_tilde, p, opts)
    c = _Coefficients.build(U, P, v_tilde, theta_tilde, f, p)
    b = _source(c)
    x = LinearizedSolution.zeros(U.grid) if x0 is None else x0
    w = opts.omega
    history: list[float] = []
    doublings = 0
    dropped = (0.0, 0.0, 0.0)
    for it in range(1, opts.max_iter + 1):
        rhs, dropped = _combine(b, _lagged(x, c)).project()
        xnew = _relax(principal_mode_solve(rhs, p, opts.delta), x, w)
        upd = xnew.h1_distance(x)
        if history and upd > history[-1]:
            doublings = doublings + 1 if upd > 2 * history[-1] else 0
            if w > OMEGA_FLOOR:
                w = max(w / 2, OMEGA_FLOOR)
                log.debug("compressible picard: update grew to %.3e, omega -> %.3g", upd, w)
        else:
            doublings = 0
        history.append(upd)
        x = xnew
        if upd < opts.tol or (it == 1 and upd == 0.0):
            x.inner_iters = it
            x.history = history
            res, dropped = linearized_residual(x, U, P, v_tilde, theta_tilde, f, p, opts.delta)
            x.residual = residual_norm(res)
            x.k0_discard = dropped
            return x
        runaway = upd > GROWTH_LIMIT * min(history)
        if doublings >= 2 or runaway or not np.isfinite(upd):
            x.inner_iters = it
            why = "update doubled twice in a row" if doublings >= 2 else "update grew without bound"
            raise InnerDivergence("compressible", it, upd, history, partial=x, reason=why)
    x.inner_iters = opts.max_iter
    x.k0_discard = dropped
    raise NoConvergence("compressible", opts.max_iter, history[-1], history, partial=x)


# energy diagnostics ---------------------------------------------------------------

def _dinv(s: SpectralVectorField | SpectralField) -> SpectralField:
    """``lap^{-1} div`` of a vector field."""
    return inverse_laplacian(mean_zero_project(divergence(s)))


def bilinear_form_B(x: LinearizedSolution, y: LinearizedSolution, p: FluidParams,
                    U: SpectralVectorField, v_tilde: SpectralVectorField, theta_tilde: SpectralField,
                    P: SpectralField, f: SpectralVectorField, delta: float = 0.0) -> float:
    """Bilinear form of the regularized, ``lap^{-1} div``-reformulated system.

    ``x`` is the trial triple ``(eta, v, theta)`` and ``y`` the test triple.
    Each integral is a unit-measure quadrature (Parseval).  ``P`` enters the
    form only through the right-hand side and is accepted for interface
    symmetry with the solver.
    """
    eps, mu, zeta, kappa = p.eps, p.mu, p.zeta, p.kappa
    vt, tt = v_tilde, theta_tilde
    ex, vx, tx = x.eta, x.v, x.theta
    ey, vy, ty = y.eta, y.v, y.theta
    w = U + vt
    A = advect(w, w)
    divvx, divvy, divvt = divergence(vx), divergence(vy), divergence(vt)
    sy = ey + ty

    total = delta * inner(gradient(ex), gradient(ey))
    total -= inner(advect(U, ey), ex) + inner(advect(U, vy), vx) + inner(advect(U, ty), tx)
    total -= inner(advect(vt, ey), ex)
    total += inner(ex + tx, sy) + mu * sum(inner(gradient(vx[i]), gradient(vy[i])) for i in range(len(vx)))
    total += zeta * inner(divvx, divvy) + kappa * inner(gradient(tx), gradient(ty))
    bracket = (dealiased_product(ex, tt) * eps
               + _dinv(advect(U, vx)) * eps
               - divvx * (eps * (mu + zeta))
               - _dinv(scale(ex, f)) * eps**2
               + _dinv(scale(ex, A)) * eps**2)
    total += inner(bracket, sy)
    total += inner((scale(ex, A) - scale(ex, f)) * eps, vy) - inner(dealiased_product(ex, tt), divvy)
    total += inner(dealiased_product(ex, advect(w, tt)) * eps
                   - dealiased_product(dealiased_product(ex, tt), divvt) * eps
                   + dealiased_product(ex, divvt), ty)
    total += (inner(divvx, ey) - inner(divvy, ex + tx) + inner(divvx, ty)) / eps
    return float(total)


def skew_identity_check(eta: SpectralField, theta: SpectralField, v: SpectralVectorField) -> float:
    """``|integral((eta+theta) div v + v . grad(eta+theta))|``; zero on the torus."""
    s = eta + theta
    return abs(inner(s, divergence(v)) + inner(v, gradient(s)))


def energy_diagnostics(x: LinearizedSolution, p, U, v_tilde, theta_tilde, P, f, delta=0.0) -> EnergyDiagnostics:
    Bq = bilinear_form_B(x, x, p, U, v_tilde, theta_tilde, P, f, delta)
    lb = sobolev_norm(x.eta, 0) ** 2 + sobolev_norm(x.v, 1) ** 2 + sobolev_norm(x.theta, 1) ** 2
    return EnergyDiagnostics(Bq, lb, Bq / lb if lb > 0 else 0.0,
                             skew_identity_check(x.eta, x.theta, x.v))


def random_state(grid: Grid, rng: np.random.Generator, bandwidth: int | None = None) -> LinearizedSolution:
    return LinearizedSolution(random_field(grid, rng, bandwidth=bandwidth),
                              random_vector(grid, rng, bandwidth=bandwidth),
                              random_field(grid, rng, bandwidth=bandwidth))


def coercivity_probe(p: FluidParams, U, v_tilde, theta_tilde, P, f, delta: float = 0.0,
                     trials: int = 100, rng: np.random.Generator | None = None,
                     opts: LinearizedOptions = LinearizedOptions()) -> CoercivitySummary:
    """Minimum of ``B(x;x) / (||eta||_0^2 + ||v||_1^2 + ||theta||_1^2)`` over random ``x``.

    Outside the smallness gates the ratio may turn negative; that is reported,
    not raised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    inside = (p.eps <= opts.eps0 and sobolev_norm(theta_tilde, 2) <= opts.gate
              and sobolev_norm(v_tilde, 3) <= opts.gate)
    worst = None
    for _ in range(trials):
        d = energy_diagnostics(random_state(U.grid, rng), p, U, v_tilde, theta_tilde, P, f, delta)
        if worst is None or d.coercivity_ratio < worst.coercivity_ratio:
            worst = d
    return CoercivitySummary(worst.coercivity_ratio, trials, worst, inside)
