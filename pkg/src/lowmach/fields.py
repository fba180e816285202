"""State model, physical parameters and residual evaluators.

Two coordinate systems describe the same flow:

* the split state ``(U, P, v, eta, theta)``: an incompressible part ``(U, P)``
  plus a compressible correction ``(v, eta, theta)``;
* the composite state ``(u, rho, theta)`` with ``u = U + v`` and
  ``rho = eps * P + eta``.

Density and temperature are ``1 + eps * rho`` and ``1 + eps * theta``
(gas constant, heat capacity and reference state all normalized to one).

Every product below goes through :func:`~lowmach.spectral.dealiased_product`.
Triple products are always grouped the same way (the scalar coefficient is
formed first, then multiplied onto the remaining factor) so that the split
solvers and the residual evaluators agree to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import NegativeDensity, NotSolenoidal
from .spectral import (
    SpectralField,
    SpectralVectorField,
    advect,
    dealiased_product,
    derivative,
    divergence,
    gradient,
    laplacian,
    mean_zero_project,
    scale,
    sobolev_norm,
)

DENSITY_FLOOR = 1e-6
SOLENOIDAL_TOL = 1e-12


@dataclass(frozen=True)
class FluidParams:
    """Viscosities ``mu``/``lam``, conductivity ``kappa`` and Mach number ``eps``."""

    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    eps: float = 0.05
    dim: int = 2

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0 (got {self.mu})")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0 (got {self.kappa})")
        if 2 * self.mu + self.dim * self.lam < 0:
            raise ValueError(f"2*mu + dim*lambda must be >= 0 (got {2 * self.mu + self.dim * self.lam})")
        if not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1] (got {self.eps})")

    @property
    def zeta(self) -> float:
        return self.mu + self.lam

    def with_eps(self, eps: float) -> "FluidParams":
        return FluidParams(self.mu, self.lam, self.kappa, eps, self.dim)


@dataclass(frozen=True)
class SplitState:
    U: SpectralVectorField
    P: SpectralField
    v: SpectralVectorField
    eta: SpectralField
    theta: SpectralField

    @classmethod
    def zeros(cls, grid) -> "SplitState":
        z = SpectralField.zeros(grid)
        zv = SpectralVectorField.zeros(grid)
        return cls(zv, z, zv, z, z)

    def check(self, tol: float = 1e-12) -> list[str]:
        """Return the violated invariants (empty when the state is valid)."""
        bad = []
        if sobolev_norm(divergence(self.U), 0) > tol:
            bad.append("div U != 0")
        for name in ("P", "eta", "theta"):
            if abs(getattr(self, name).coeffs[0, 0]) > tol:
                bad.append(f"mean({name}) != 0")
        if any(abs(c.coeffs[0, 0]) > tol for c in self.v):
            bad.append("mean(v) != 0")
        return bad


@dataclass(frozen=True)
class CompositeState:
    u: SpectralVectorField
    rho: SpectralField
    theta: SpectralField


def compose(s: SplitState, p: FluidParams) -> CompositeState:
    """``u = U + v``, ``rho = eps*P + eta``; the mean of rho is hard-zeroed."""
    return CompositeState(s.U + s.v, mean_zero_project(s.P * p.eps + s.eta), s.theta)


def decompose(c: CompositeState, U: SpectralVectorField, P: SpectralField, p: FluidParams) -> SplitState:
    """Inverse of :func:`compose` for a given incompressible part."""
    return SplitState(U, P, c.u - U, c.rho - P * p.eps, c.theta)


def deformation_tensor(u: SpectralVectorField) -> tuple[tuple[SpectralField, ...], ...]:
    """Symmetric gradient ``D_ij = (d_i u_j + d_j u_i) / 2``."""
    d = len(u)
    grads = [[derivative(u[j], i) for j in range(d)] for i in range(d)]
    rows = []
    for i in range(d):
        rows.append(tuple((grads[i][j] + grads[j][i]) * 0.5 if i != j else grads[i][i] for j in range(d)))
    return tuple(rows)


def dissipation(u: SpectralVectorField, p: FluidParams) -> SpectralField:
    """Viscous dissipation ``2 mu D:D + lam (div u)^2``."""
    D = deformation_tensor(u)
    d = len(u)
    dd = SpectralField.zeros(u.grid)
    for i in range(d):
        for j in range(d):
            dd = dd + dealiased_product(D[i][j], D[i][j])
    divu = divergence(u)
    return dd * (2.0 * p.mu) + dealiased_product(divu, divu) * p.lam


def div_stress(u: SpectralVectorField, p: FluidParams) -> SpectralVectorField:
    """``div S = mu lap u + (mu + lam) grad div u``."""
    return laplacian(u) * p.mu + gradient(divergence(u)) * p.zeta


@dataclass
class ResidualReport:
    """Residual fields of one system, their norms and the discarded means.

    Momentum and energy residuals are reported with their k = 0 mode removed
    (the periodic problem cannot fix those means); the removed values are
    kept in ``k0``.
    """

    system: str
    fields: Dict[str, SpectralField]
    k0: Dict[str, float] = field(default_factory=dict)
    l2: Dict[str, float] = field(init=False)
    h1: Dict[str, float] = field(init=False)
    total: float = field(init=False)

    def __post_init__(self):
        self.l2 = {k: sobolev_norm(f, 0) for k, f in self.fields.items()}
        self.h1 = {k: sobolev_norm(f, 1) for k, f in self.fields.items()}
        self.total = float(np.sqrt(sum(v * v for v in self.l2.values())))

    def to_dict(self) -> dict:
        return {"system": self.system, "l2": self.l2, "h1": self.h1, "k0": self.k0, "total": self.total}


def _report(system: str, raw: Dict[str, SpectralField], project: tuple[str, ...]) -> ResidualReport:
    k0 = {}
    out = {}
    for name, f in raw.items():
        if name in project:
            k0[name] = abs(complex(f.coeffs[0, 0]))
            f = mean_zero_project(f)
        out[name] = f
    return ResidualReport(system, out, k0)


def _vector_report(system, mass, mom, energy):
    raw = {}
    if mass is not None:
        raw["mass"] = mass
    for i, c in enumerate(mom):
        raw[f"momentum_{i}"] = c
    if energy is not None:
        raw["energy"] = energy
    proj = tuple(k for k in raw if k != "mass")
    return _report(system, raw, proj)


def residual_transformed(c: CompositeState, p: FluidParams, f: SpectralVectorField,
                         g: SpectralVectorField) -> ResidualReport:
    """Residual of the perturbation system in ``(u, rho, theta)``.

    mass:     div u + eps div(rho u)
    momentum: (1+eps rho) u.grad u + (1+eps theta) grad rho / eps
              + (1+eps rho) grad theta / eps - div S - (1+eps rho) f - g
    energy:   eps (1+eps rho) u.grad theta + div u
              + (eps rho + eps theta + eps^2 rho theta) div u
              - eps kappa lap theta - eps^2 Psi
    """
    eps = p.eps
    u, rho, th = c.u, c.rho, c.theta
    divu = divergence(u)
    mass = divu + divergence(scale(rho, u)) * eps

    ugu = advect(u, u)
    grho, gth = gradient(rho), gradient(th)
    mom = (ugu + scale(rho, ugu) * eps
           + grho / eps + scale(th, grho)
           + gth / eps + scale(rho, gth)
           - div_stress(u, p)
           - f - scale(rho, f) * eps - g)

    ugth = advect(u, th)
    coef = rho * eps + th * eps + dealiased_product(rho, th) * eps**2
    energy = (ugth * eps + dealiased_product(rho, ugth) * eps**2
              + divu + dealiased_product(coef, divu)
              - laplacian(th) * (eps * p.kappa)
              - dissipation(u, p) * eps**2)
    return _vector_report("transformed", mass, mom, energy)


def check_density(c: CompositeState, p: FluidParams) -> float:
    """Return ``min(1 + eps*rho)`` on the grid; raise below the floor."""
    rmin = 1.0 + p.eps * float(c.rho.to_physical().min())
    if rmin <= DENSITY_FLOOR:
        raise NegativeDensity(f"1 + eps*rho reaches {rmin:.3e} (floor {DENSITY_FLOOR})")
    return rmin


def residual_primitive(c: CompositeState, p: FluidParams, f: SpectralVectorField,
                       g: SpectralVectorField) -> ResidualReport:
    """Residual of the scaled physical system in density, velocity, temperature.

    mass:     div(varrho u)
    momentum: varrho u.grad u + grad p / eps^2 - div S - varrho f - g
    energy:   varrho u.grad Theta + p div u - kappa lap Theta - eps^2 Psi

    with ``varrho = 1 + eps rho``, ``Theta = 1 + eps theta`` and
    ``p = varrho Theta``.  The constant part of ``p`` is dropped before
    differentiating, which leaves the gradient unchanged.

    Raises:
        NegativeDensity: if ``varrho`` is not safely positive.
    """
    check_density(c, p)
    eps = p.eps
    u, rho, th = c.u, c.rho, c.theta
    dvarrho = rho * eps                                 # varrho - 1
    dtheta = th * eps                                   # Theta - 1
    dp = dvarrho + dtheta + dealiased_product(rho, th) * eps**2   # p - 1
    divu = divergence(u)

    mass = divu + divergence(scale(dvarrho, u))
    ugu = advect(u, u)
    mom = (ugu + scale(dvarrho, ugu) + gradient(dp) / eps**2
           - div_stress(u, p) - f - scale(dvarrho, f) - g)
    ugT = advect(u, dtheta)
    energy = (ugT + dealiased_product(dvarrho, ugT)
              + divu + dealiased_product(dp, divu)
              - laplacian(dtheta) * p.kappa - dissipation(u, p) * eps**2)
    return _vector_report("primitive", mass, mom, energy)


def residual_incompressible(U: SpectralVectorField, P: SpectralField, f: SpectralVectorField,
                            g: SpectralVectorField, mu: float,
                            v: SpectralVectorField | None = None) -> ResidualReport:
    """Residual of ``(U + v).grad U - mu lap U + grad P = f + g`` and ``div U``.

    ``v`` defaults to zero (the plain incompressible system).
    """
    a = U if v is None else U + v
    mom = advect(a, U) - laplacian(U) * mu + gradient(P) - f - g
    return _vector_report("incompressible", divergence(U), mom, None)


def mms_forcing(U_star: SpectralVectorField, P_star: SpectralField, mu: float) -> SpectralVectorField:
    """Forcing ``h`` for which ``(U_star, P_star)`` solves the incompressible system.

    Raises:
        NotSolenoidal: if ``div U_star`` exceeds 1e-12 in L2.
    """
    d = sobolev_norm(divergence(U_star), 0)
    if d > SOLENOIDAL_TOL:
        raise NotSolenoidal(f"manufactured velocity has ||div U*|| = {d:.3e}")
    return advect(U_star, U_star) - laplacian(U_star) * mu + gradient(P_star)


# named fields used by tests, presets and the CLI ---------------------------

def taylor_green(grid, amplitude: float = 1.0) -> SpectralVectorField:
    """``amplitude * (sin x cos y, -cos x sin y)``."""
    return SpectralVectorField.from_function(
        grid,
        lambda x, y: amplitude * np.sin(x) * np.cos(y),
        lambda x, y: -amplitude * np.cos(x) * np.sin(y),
    )


def taylor_green_pressure(grid, amplitude: float = 1.0) -> SpectralField:
    """Pressure balancing the self-advection of :func:`taylor_green`."""
    return SpectralField.from_function(
        grid, lambda x, y: amplitude**2 * (np.cos(2 * x) + np.cos(2 * y)) / 4)
