"""Randomized invariant suite behind ``lowmach check``.

Every property draws its random inputs from one seeded generator and runs on
the configured grid, so a broken setting (say ``dealias_fraction = 1``)
shows up as a failed property rather than a crash.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compressible import (
    CompressibleRHS,
    LinearizedOptions,
    bilinear_form_B,
    coercivity_probe,
    principal_mode_solve,
    random_state,
    skew_identity_check,
    solve_linearized,
)
from .config import RunConfig
from .errors import LowMachError
from .fields import (
    CompositeState,
    FluidParams,
    compose,
    decompose,
    dissipation,
    mms_forcing,
    residual_incompressible,
    residual_primitive,
    residual_transformed,
    taylor_green,
    taylor_green_pressure,
)
from .fixedpoint import fixed_point_solve
from .incompressible import solve_incompressible_ns, stokes_mode_solve
from .spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    advect,
    dealiased_product,
    derivative,
    divergence,
    gradient,
    inner,
    inverse_laplacian,
    laplacian,
    leray_project,
    mean_zero_project,
    random_field,
    random_vector,
    sobolev_norm,
)
from .sweep import check_invariants, epsilon_sweep

log = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class _Ctx:
    cfg: RunConfig
    grid: Grid
    rng: np.random.Generator
    trials: int

    @property
    def params(self) -> FluidParams:
        return self.cfg.params()


_CHECKS: list[tuple[str, Callable[[_Ctx], tuple[bool, str]]]] = []


def _check(name):
    def deco(fn):
        _CHECKS.append((name, fn))
        return fn
    return deco


def _worst(values) -> float:
    return max(values, default=0.0)


# spectral --------------------------------------------------------------------------

@_check("spectral.parseval")
def _parseval(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        f = random_field(c.grid, c.rng, mean_zero=False)
        quad = float(np.mean(f.to_physical() ** 2))
        errs.append(abs(sobolev_norm(f, 0) ** 2 - quad) / quad)
    e = _worst(errs)
    return e <= 1e-12, f"max relative error {e:.2e}"


@_check("spectral.transform_round_trip")
def _round_trip(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        vals = c.rng.standard_normal(c.grid.shape)
        back = SpectralField.from_physical(c.grid, vals).to_physical()
        errs.append(np.linalg.norm(back - vals) / np.linalg.norm(vals))
    e = _worst(errs)
    return e <= 1e-13, f"max relative error {e:.2e}"


@_check("spectral.div_grad_is_laplacian")
def _div_grad(c: _Ctx):
    e = _worst(np.abs(divergence(gradient(f)).coeffs - laplacian(f).coeffs).max()
               for f in (random_field(c.grid, c.rng, mean_zero=False) for _ in range(c.trials)))
    return e <= 1e-14, f"max coefficient error {e:.2e}"


@_check("spectral.inverse_laplacian_round_trip")
def _inv_lap(c: _Ctx):
    e = _worst(np.abs(laplacian(inverse_laplacian(f)).coeffs - f.coeffs).max()
               for f in (random_field(c.grid, c.rng) for _ in range(c.trials)))
    return e <= 1e-13, f"max coefficient error {e:.2e}"


@_check("spectral.derivative_commutes_with_mean_projection")
def _commute(c: _Ctx):
    ok = True
    for _ in range(c.trials):
        f = random_field(c.grid, c.rng, mean_zero=False)
        for ax in (0, 1):
            ok &= np.array_equal(derivative(mean_zero_project(f), ax).coeffs,
                                 mean_zero_project(derivative(f, ax)).coeffs)
    return bool(ok), "exact equality" if ok else "mismatch"


@_check("spectral.dealiasing_exact")
def _aliasing(c: _Ctx):
    """Products of fields filling the retained band must equal the exact
    product (computed on a 4x finer grid) restricted to that band."""
    g = c.grid
    fine = Grid(4 * g.n)
    K = g.kmax_resolved
    kc = np.fft.fftfreq(g.n, 1 / g.n).astype(int)
    idx_f = np.ix_(kc % fine.n, kc % fine.n)
    keep = (np.abs(kc)[:, None] <= K) & (np.abs(kc)[None, :] <= K)
    errs = []
    for _ in range(c.trials):
        a = random_field(g, c.rng, bandwidth=K, mean_zero=False)
        b = random_field(g, c.rng, bandwidth=K, mean_zero=False)
        emb = lambda f: _embed(f.coeffs, fine.n)
        exact = SpectralField.from_physical(
            fine, SpectralField(fine, emb(a)).to_physical() * SpectralField(fine, emb(b)).to_physical())
        want = np.where(keep, exact.coeffs[idx_f], 0.0)
        scale = np.abs(want).max()
        errs.append(np.abs(dealiased_product(a, b).coeffs - want).max() / scale)
    e = _worst(errs)
    return e <= 1e-12, f"max relative aliasing error {e:.2e} (retained band |k| <= {K})"


def _embed(coeffs: np.ndarray, n_fine: int) -> np.ndarray:
    n = coeffs.shape[0]
    k = np.fft.fftfreq(n, 1 / n).astype(int) % n_fine
    out = np.zeros((n_fine, n_fine), dtype=complex)
    out[np.ix_(k, k)] = coeffs
    return out


# fields -----------------------------------------------------------------------------

def _composite(c: _Ctx, amplitude=0.3) -> CompositeState:
    return CompositeState(random_vector(c.grid, c.rng, amplitude=amplitude),
                          random_field(c.grid, c.rng, amplitude=amplitude),
                          random_field(c.grid, c.rng, amplitude=amplitude))


@_check("fields.primitive_equals_transformed")
def _prim_vs_trans(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        st = _composite(c)
        f, g = random_vector(c.grid, c.rng), random_vector(c.grid, c.rng)
        a, b = residual_transformed(st, c.params, f, g), residual_primitive(st, c.params, f, g)
        diff = max(np.abs(a.fields[k].coeffs - b.fields[k].coeffs).max() for k in a.fields)
        errs.append(diff / max(a.total, 1e-300))
    e = _worst(errs)
    return e <= 1e-12, f"max field difference relative to residual size {e:.2e}"


@_check("fields.dissipation_mean_nonnegative")
def _psi(c: _Ctx):
    lo = min(dissipation(random_vector(c.grid, c.rng), c.params).mean for _ in range(c.trials))
    return lo >= -1e-14, f"min mean dissipation {lo:.3e}"


@_check("fields.compose_decompose_round_trip")
def _compose(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        U = leray_project(random_vector(c.grid, c.rng))
        P = random_field(c.grid, c.rng)
        st = decompose(_composite(c), U, P, c.params)
        back = decompose(compose(st, c.params), U, P, c.params)
        errs.append(max(np.abs(back.eta.coeffs - st.eta.coeffs).max(),
                        np.abs((back.v - st.v).coeffs).max(),
                        np.abs(back.theta.coeffs - st.theta.coeffs).max()))
    e = _worst(errs)
    return e <= 1e-15, f"max coefficient error {e:.2e}"


@_check("fields.manufactured_forcing_consistent")
def _mms(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        U = leray_project(random_vector(c.grid, c.rng))
        P = random_field(c.grid, c.rng)
        h = mms_forcing(U, P, c.params.mu)
        zero = SpectralVectorField.zeros(c.grid)
        errs.append(residual_incompressible(U, P, h, zero, c.params.mu).total)
    e = _worst(errs)
    return e <= 1e-13, f"max residual {e:.2e}"


# incompressible -----------------------------------------------------------------------

@_check("incompressible.stokes_exact")
def _stokes(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        h = random_vector(c.grid, c.rng)
        U, P = stokes_mode_solve(h, c.params.mu)
        mom = laplacian(U) * (-c.params.mu) + gradient(P) - h
        errs.append(max(sobolev_norm(divergence(U), 0), sobolev_norm(mean_zero_project(mom), 0)))
    e = _worst(errs)
    return e <= 1e-13, f"max residual {e:.2e}"


@_check("incompressible.advection_energy_neutral")
def _advect(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        a = leray_project(random_vector(c.grid, c.rng))
        U = random_vector(c.grid, c.rng)
        errs.append(abs(inner(advect(a, U), U)) / (sobolev_norm(a, 1) * sobolev_norm(U, 1) ** 2))
    e = _worst(errs)
    return e <= 1e-13, f"max relative integral {e:.2e}"


@_check("incompressible.taylor_green_recovered")
def _tg(c: _Ctx):
    mu = c.params.mu
    Ustar = taylor_green(c.grid, 1.0)
    h = mms_forcing(Ustar, taylor_green_pressure(c.grid, 1.0), mu)
    sol = solve_incompressible_ns(h, SpectralVectorField.zeros(c.grid), None, mu, tol=1e-13)
    e = sobolev_norm(sol.U - Ustar, 2)
    return e <= 1e-10, f"||U - U*||_2 = {e:.2e}"


# compressible ---------------------------------------------------------------------------

def dense_symbol(k: tuple[int, int], p: FluidParams, delta: float) -> np.ndarray:
    """4x4 symbol of the constant-coefficient operator, unknowns (eta, v0, v1, theta)."""
    kx, ky = k
    s2 = kx * kx + ky * ky
    e = p.eps
    return np.array([
        [delta * s2, 1j * kx / e, 1j * ky / e, 0.0],
        [1j * kx / e, p.mu * s2 + p.zeta * kx * kx, p.zeta * kx * ky, 1j * kx / e],
        [1j * ky / e, p.zeta * kx * ky, p.mu * s2 + p.zeta * ky * ky, 1j * ky / e],
        [0.0, 1j * kx / e, 1j * ky / e, p.kappa * s2],
    ], dtype=complex)


def single_mode_rhs(grid: Grid, k: tuple[int, int], r: np.ndarray) -> CompressibleRHS:
    arrs = [np.zeros(grid.shape, dtype=complex) for _ in range(4)]
    for a, val in zip(arrs, r):
        a[k[0] % grid.n, k[1] % grid.n] = val
    return CompressibleRHS(SpectralField(grid, arrs[0]), SpectralVectorField.from_arrays(grid, arrs[1:3]),
                           SpectralField(grid, arrs[3]))


def principal_oracle_error(grid: Grid, rng: np.random.Generator, p: FluidParams, delta: float = 0.0) -> float:
    """Relative error of one random single-mode principal solve against the dense symbol."""
    K = grid.kmax_resolved
    while True:
        k = tuple(int(x) for x in rng.integers(-K, K + 1, 2))
        if k != (0, 0):
            break
    r = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    x = principal_mode_solve(single_mode_rhs(grid, k, r), p, delta)
    i, j = k[0] % grid.n, k[1] % grid.n
    got = np.array([x.eta.coeffs[i, j], x.v[0].coeffs[i, j], x.v[1].coeffs[i, j], x.theta.coeffs[i, j]])
    want = np.linalg.solve(dense_symbol(k, p, delta), r)
    return float(np.linalg.norm(got - want) / np.linalg.norm(want))


@_check("compressible.principal_matches_dense_symbol")
def _principal(c: _Ctx):
    errs = []
    for eps in (1.0, 0.1, 0.01, 0.001):
        p = c.params.with_eps(eps)
        for delta in (0.0, 0.5):
            errs += [principal_oracle_error(c.grid, c.rng, p, delta) for _ in range(c.trials)]
    e = _worst(errs)
    return e <= 1e-12, f"max relative error {e:.2e} over {len(errs)} solves"


@_check("compressible.skew_identity")
def _skew(c: _Ctx):
    errs = []
    for _ in range(c.trials):
        x = random_state(c.grid, c.rng)
        scale = sobolev_norm(x.eta + x.theta, 1) * sobolev_norm(x.v, 1)
        errs.append(skew_identity_check(x.eta, x.theta, x.v) / scale)
    e = _worst(errs)
    return e <= 1e-12, f"max relative integral {e:.2e}"


def dropout_quadratic(x, p: FluidParams) -> float:
    """``B(x; x)`` with every coefficient field zero and ``delta = 0``, from raw coefficients."""
    kx, ky = x.eta.grid.k_deriv
    s2 = kx * kx + ky * ky
    eta, th = x.eta.coeffs, x.theta.coeffs
    v0, v1 = x.v[0].coeffs, x.v[1].coeffs
    dv = 1j * (kx * v0 + ky * v1)
    s = eta + th
    sq = lambda a: float(np.sum(np.abs(a) ** 2))
    cross = float(np.sum((dv * np.conj(s)).real))
    return (sq(s) + p.mu * (sq(np.sqrt(s2) * v0) + sq(np.sqrt(s2) * v1)) + p.zeta * sq(dv)
            + p.kappa * sq(np.sqrt(s2) * th) - p.eps * (p.mu + p.zeta) * cross)


@_check("compressible.coercivity_zero_coefficients")
def _coercive(c: _Ctx):
    z = SpectralField.zeros(c.grid)
    zv = SpectralVectorField.zeros(c.grid)
    summ = coercivity_probe(c.params, zv, zv, z, z, zv, 0.0, trials=c.trials, rng=c.rng)
    errs = []
    for _ in range(c.trials):
        x = random_state(c.grid, c.rng)
        B = bilinear_form_B(x, x, c.params, zv, zv, z, z, zv)
        ref = dropout_quadratic(x, c.params)
        errs.append(abs(B - ref) / abs(ref))
    e = _worst(errs)
    return summ.min_ratio > 0 and e <= 1e-9, f"min ratio {summ.min_ratio:.4g}; closed-form mismatch {e:.2e}"


def _tg_background(c: _Ctx):
    f, g = c.cfg.forcing_fields(c.grid)
    ns = solve_incompressible_ns(f, g, None, c.params.mu, tol=1e-12)
    return f, ns


@_check("compressible.two_seed_agreement")
def _two_seed(c: _Ctx):
    f, ns = _tg_background(c)
    z = SpectralField.zeros(c.grid)
    zv = SpectralVectorField.zeros(c.grid)
    p = c.params.with_eps(0.05)
    opts = LinearizedOptions(tol=1e-13)
    seeds = []
    for amp in (0.0, 0.05):
        x0 = random_state(c.grid, c.rng)
        x0 = type(x0)(x0.eta * amp, x0.v * amp, x0.theta * amp)
        seeds.append(solve_linearized(ns.U, ns.P, zv, z, f, p, opts, x0=x0))
    d = seeds[0].h1_distance(seeds[1])
    return d <= 1e-9, f"H1 distance {d:.2e}"


# fixed point and sweep --------------------------------------------------------------------

@_check("fixedpoint.zero_forcing_fixed")
def _zero(c: _Ctx):
    zv = SpectralVectorField.zeros(c.grid)
    rep = fixed_point_solve(zv, zv, c.params, c.cfg.solver_options())
    n = sum(rep.perturbation_norms.values()) + sobolev_norm(rep.state.U, 1)
    return rep.outer_iters == 1 and n == 0.0, f"{rep.outer_iters} outer iterations, norm {n:.1e}"


@_check("fixedpoint.converged_state_consistent")
def _fp(c: _Ctx):
    f, g = c.cfg.forcing_fields(c.grid)
    opts = c.cfg.solver_options()
    rep = fixed_point_solve(f, g, c.params, opts)
    s = rep.state
    tol = opts.tol
    means = max(abs(s.eta.coeffs[0, 0]), abs(s.P.coeffs[0, 0]))
    small = sum(rep.perturbation_norms.values())
    ok = (rep.residual_total <= 10 * tol
          and rep.residual_primitive_total <= 10 * tol * (1 + c.params.eps)
          and means <= 1e-13 and small <= opts.E
          and (rep.contraction is None or rep.contraction.geometric))
    return ok, (f"transformed {rep.residual_total:.2e}, primitive {rep.residual_primitive_total:.2e}, "
                f"perturbation {small:.3g}, outer {rep.outer_iters}")


@_check("sweep.ladder_invariants")
def _sweep(c: _Ctx):
    f, g = c.cfg.forcing_fields(c.grid)
    table = epsilon_sweep(f, g, c.params, c.cfg.eps_list, c.cfg.solver_options())
    inv = check_invariants(table)
    failed = [k for k, v in inv.items() if v is False]
    return not failed, "all hold" if not failed else f"failed: {', '.join(failed)}"


def run_checks(cfg: RunConfig, trials: int | None = None, seed: int | None = None,
               only: list[str] | None = None) -> list[CheckResult]:
    """Run every registered property; exceptions count as failures."""
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    ctx = _Ctx(cfg, cfg.grid(), rng, trials)
    out = []
    for name, fn in _CHECKS:
        if only and name not in only:
            continue
        try:
            ok, detail = fn(ctx)
        except (LowMachError, ArithmeticError, ValueError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        if isinstance(ok, float) and math.isnan(ok):
            ok = False
        out.append(CheckResult(name, bool(ok), detail))
        log.info("%s %s: %s", "PASS" if ok else "FAIL", name, detail)
    return out


def check_names() -> list[str]:
    return [n for n, _ in _CHECKS]
