"""Advected Stokes and incompressible Navier-Stokes solvers.

The principal part ``-mu lap U + grad P = r, div U = 0`` is inverted exactly
per Fourier mode (Leray projection).  Advection is handled by Picard
iteration with lagged advecting field, optionally under-relaxed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, SmallnessGateError
from .fields import residual_incompressible
from .spectral import (
    SpectralField,
    SpectralVectorField,
    advect,
    gradient,
    leray_project,
    mean_zero_project,
    sobolev_norm,
)

log = logging.getLogger(__name__)

OMEGA_FLOOR = 0.1


@dataclass
class StokesSolution:
    U: SpectralVectorField
    P: SpectralField
    picard_iters: int
    final_update_norm: float
    history: list[float] = field(default_factory=list, repr=False)


def stokes_mode_solve(rhs: SpectralVectorField, mu: float) -> tuple[SpectralVectorField, SpectralField]:
    """Exact solve of ``-mu lap U + grad P = rhs``, ``div U = 0`` mode by mode.

    The k = 0 mode of ``rhs`` is discarded; ``U`` and ``P`` come back mean-zero.
    """
    g = rhs.grid
    kx, ky = g.k_deriv
    k2 = kx * kx + ky * ky
    nz = k2 > 0
    inv = np.zeros_like(k2)
    inv[nz] = 1.0 / k2[nz]
    r = rhs.coeffs
    kr = kx * r[0] + ky * r[1]
    P = -1j * kr * inv
    U0 = (r[0] - kx * kr * inv) * inv / mu
    U1 = (r[1] - ky * kr * inv) * inv / mu
    return SpectralVectorField.from_arrays(g, [U0, U1]), SpectralField(g, P)


def compressive_norm(a: SpectralVectorField) -> float:
    """H^3 norm of the curl-free part of ``a``, the quantity gated by ``a0``."""
    return sobolev_norm(a - leray_project(a), 3)


def _is_zero(a: SpectralVectorField) -> bool:
    return not any(np.any(c.coeffs) for c in a)


def solve_advected_stokes(a: SpectralVectorField, h: SpectralVectorField, mu: float,
                          tol: float = 1e-11, max_iter: int = 500, omega: float = 1.0,
                          a0: float = 0.5, force: bool = False,
                          U0: SpectralVectorField | None = None) -> StokesSolution:
    """Solve ``a.grad U - mu lap U + grad P = h``, ``div U = 0``.

    Picard: ``U <- (1-w) U + w S(h - a.grad U)`` where ``S`` is
    :func:`stokes_mode_solve`.  ``w`` starts at ``omega`` and is halved
    (down to 0.1) whenever the H1 update grows.

    Args:
        a: advecting velocity (need not be solenoidal).
        h: forcing.
        a0: smallness gate on the compressive part of ``a`` in H^3.
        force: skip the gate.
        U0: initial guess (default zero).

    Raises:
        SmallnessGateError: gate violated and ``force`` is false.
        NoConvergence: ``max_iter`` reached.
    """
    if not force:
        an = compressive_norm(a)
        if an > a0:
            raise SmallnessGateError(f"compressive part of advecting field ||a||_3 = {an:.3g} exceeds a0 = {a0}")
    h = mean_zero_project(h)
    if _is_zero(a):
        U, P = stokes_mode_solve(h, mu)
        return StokesSolution(U, P, 1, sobolev_norm(U if U0 is None else U - U0, 1))

    U = SpectralVectorField.zeros(h.grid) if U0 is None else U0
    w = omega
    history: list[float] = []
    P = SpectralField.zeros(h.grid)
    for it in range(1, max_iter + 1):
        Unew, P = stokes_mode_solve(h - advect(a, U), mu)
        if w != 1.0:
            Unew = U * (1.0 - w) + Unew * w
        upd = sobolev_norm(Unew - U, 1)
        if history and upd > history[-1] and w > OMEGA_FLOOR:
            w = max(w / 2, OMEGA_FLOOR)
            log.debug("stokes picard: update grew to %.3e, omega -> %.3g", upd, w)
        history.append(upd)
        U = Unew
        if upd < tol:
            return StokesSolution(U, P, it, upd, history)
        if not np.isfinite(upd):
            break
    raise NoConvergence("stokes", len(history), history[-1], history,
                        partial=StokesSolution(U, P, len(history), history[-1], history))


def solve_incompressible_ns(f: SpectralVectorField, g: SpectralVectorField,
                            v: SpectralVectorField | None, mu: float, tol: float = 1e-11,
                            max_outer: int = 200, max_iter: int = 500, omega: float = 1.0,
                            a0: float = 0.5, force: bool = False) -> StokesSolution:
    """Solve ``U.grad U + v.grad U - mu lap U + grad P = f + g``, ``div U = 0``.

    Outer fixed point on ``U -> solve_advected_stokes(U + v, f + g)`` with the
    previous iterate as warm start.  ``picard_iters`` counts outer steps.
    Steady solutions need not be unique; this returns whichever one the
    iteration reaches from ``U = 0``.

    Raises:
        NoConvergence: outer loop stalls; ``partial`` carries the last iterate.
    """
    grid = f.grid
    if v is None:
        v = SpectralVectorField.zeros(grid)
    h = f + g
    U = SpectralVectorField.zeros(grid)
    history: list[float] = []
    sol = None
    for it in range(1, max_outer + 1):
        try:
            sol = solve_advected_stokes(U + v, h, mu, tol=tol * 0.1, max_iter=max_iter,
                                        omega=omega, a0=a0, force=force, U0=U if it > 1 else None)
        except NoConvergence as exc:
            raise NoConvergence("incompressible", it, exc.last_update, history,
                                partial=exc.partial, reason="inner advected-Stokes solve stalled") from exc
        upd = sobolev_norm(sol.U - U, 1)
        history.append(upd)
        U = sol.U
        if upd < tol:
            res = residual_incompressible(U, sol.P, f, g, mu, v)
            if res.total > 10 * tol:
                log.warning("incompressible residual %.3e above 10*tol", res.total)
            return StokesSolution(U, sol.P, it, upd, history)
        if not np.isfinite(upd):
            break
    raise NoConvergence("incompressible", len(history), history[-1], history,
                        partial=StokesSolution(U, sol.P, len(history), history[-1], history))


@dataclass
class K0Report:
    """Norm diagnostics against the a-priori bounds (all constants set to one)."""

    U_norms: dict[int, float]
    h_norms: dict[int, float]
    gradP_norms: dict[int, float]
    ratios: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "U_norms": {str(k): v for k, v in self.U_norms.items()},
            "h_norms": {str(k): v for k, v in self.h_norms.items()},
            "gradP_norms": {str(k): v for k, v in self.gradP_norms.items()},
            "ratios": {str(k): v for k, v in self.ratios.items()},
        }


def _bound(m: int, hn: dict[int, float]) -> float:
    if m == 1:
        return hn[-1]
    x = hn[m - 2]
    return x * (x + 1.0) ** (4 * (m - 1))


def k0_report(U: SpectralVectorField, P: SpectralField, h: SpectralVectorField) -> K0Report:
    """Ratios ``||U||_m / bound_m(h)`` for m = 1..4.

    Bounds: ``||h||_-1`` for m=1 and ``||h||_{m-2} (||h||_{m-2} + 1)^{4(m-1)}``
    for m = 2, 3, 4.  Pure diagnostics: the true constants are unknown.
    """
    Un = {m: sobolev_norm(U, m) for m in (1, 2, 3, 4)}
    hn = {m: sobolev_norm(h, m) for m in (-1, 0, 1, 2)}
    gP = gradient(P)
    gPn = {m: sobolev_norm(gP, m) for m in (0, 1, 2)}
    ratios = {}
    for m in (1, 2, 3, 4):
        b = _bound(m, hn)
        ratios[m] = Un[m] / b if b > 0 else 0.0
    return K0Report(Un, hn, gPn, ratios)
