import numpy as np
import pytest

from lowmach.compressible import (
    CompressibleRHS,
    LinearizedOptions,
    LinearizedSolution,
    apply_principal,
    assemble_FG,
    bilinear_form_B,
    coercivity_probe,
    energy_diagnostics,
    linearized_residual,
    principal_mode_solve,
    random_state,
    residual_norm,
    skew_identity_check,
    solve_linearized,
)
from lowmach.errors import DegenerateMode, SmallnessGateError
from lowmach.fields import FluidParams, taylor_green
from lowmach.incompressible import solve_incompressible_ns
from lowmach.spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    random_field,
    random_vector,
    sobolev_norm,
)

from oracles import Fine, adv, div, dropout_closed_form, lift_vec, psi, symbol

GRID = Grid(32)
ZERO = SpectralVectorField.zeros(GRID)
Z = SpectralField.zeros(GRID)


def single_mode(k, r):
    arrs = [np.zeros((32, 32), dtype=complex) for _ in range(4)]
    for a, val in zip(arrs, r):
        a[k[0] % 32, k[1] % 32] = val
    return CompressibleRHS(SpectralField(GRID, arrs[0]), SpectralVectorField.from_arrays(GRID, arrs[1:3]),
                           SpectralField(GRID, arrs[3]))


def random_k(rng, K=10):
    while True:
        k = tuple(int(x) for x in rng.integers(-K, K + 1, 2))
        if k != (0, 0):
            return k


def at(x, k):
    i, j = k[0] % 32, k[1] % 32
    return np.array([x.eta.coeffs[i, j], x.v[0].coeffs[i, j], x.v[1].coeffs[i, j], x.theta.coeffs[i, j]])


class TestPrincipal:
    @pytest.mark.parametrize("eps", [1.0, 0.1, 0.01, 0.001])
    @pytest.mark.parametrize("delta", [0.0, 0.25])
    def test_matches_dense_symbol(self, eps, delta):
        rng = np.random.default_rng(int(1e4 * eps) + int(100 * delta))
        p = FluidParams(mu=1.2, lam=0.5, kappa=0.8, eps=eps)
        for _ in range(25):
            k = random_k(rng)
            r = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            got = at(principal_mode_solve(single_mode(k, r), p, delta), k)
            want = np.linalg.solve(symbol(k, p, delta), r)
            assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)

    @pytest.mark.parametrize("eps", [1.0, 0.01, 0.001])
    def test_forward_inverse(self, eps):
        rng = np.random.default_rng(5)
        p = FluidParams(eps=eps, lam=0.3)
        r = CompressibleRHS(random_field(GRID, rng), random_vector(GRID, rng), random_field(GRID, rng))
        for delta in (0.0, 1.0):
            back = apply_principal(principal_mode_solve(r, p, delta), p, delta)
            for a, b in ((back.r_mass, r.r_mass), (back.r_energy, r.r_energy)):
                np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-12 * np.abs(b.coeffs).max())
            np.testing.assert_allclose(back.r_mom.coeffs, r.r_mom.coeffs, atol=1e-12 * np.abs(r.r_mom.coeffs).max())

    def test_k0_raises(self):
        r = CompressibleRHS(SpectralField.from_function(GRID, lambda x, y: 1.0 + 0 * x), ZERO, Z)
        with pytest.raises(DegenerateMode):
            principal_mode_solve(r, FluidParams())

    def test_projection_reports_dropped_means(self):
        r = CompressibleRHS(Z, ZERO, SpectralField.from_function(GRID, lambda x, y: 0.25 + np.sin(x)))
        proj, dropped = r.project()
        assert dropped == pytest.approx((0.0, 0.0, 0.25))
        assert proj.r_energy.coeffs[0, 0] == 0


class TestAssembleFG:
    def test_against_fine_grid(self):
        # bandwidth-3 inputs keep every product inside the retained band,
        # so the fine-grid pointwise evaluation is exact
        rng = np.random.default_rng(11)
        p = FluidParams(mu=0.9, lam=0.2, eps=0.07)
        bw = dict(bandwidth=3, amplitude=0.4)
        P, tt, eta = (random_field(GRID, rng, **bw) for _ in range(3))
        U, vt, f = (random_vector(GRID, rng, **bw) for _ in range(3))
        F, G = assemble_FG(P, U, vt, tt, eta, f, p)

        Pf, ttf, etaf = Fine.lift(P), Fine.lift(tt), Fine.lift(eta)
        w = [a + b for a, b in zip(lift_vec(U), lift_vec(vt))]
        ff = lift_vec(f)
        rho = Pf * p.eps + etaf
        for i in range(2):
            want = rho * ff[i] - rho * adv(w, w[i]) - ttf * Pf.d(i) - Pf * ttf.d(i)
            np.testing.assert_allclose(F[i].coeffs, want.to_coarse(32), atol=1e-14)
        dvt = div(lift_vec(vt))
        wantG = psi(w, p.mu, p.lam) - rho * adv(w, ttf) - rho * ttf * dvt - Pf * dvt
        np.testing.assert_allclose(G.coeffs, wantG.to_coarse(32), atol=1e-14)

    def test_zero_inputs(self):
        F, G = assemble_FG(Z, ZERO, ZERO, Z, Z, ZERO, FluidParams())
        assert sobolev_norm(F, 0) == 0 and sobolev_norm(G, 0) == 0


class TestSkew:
    def test_random_triples(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = random_state(GRID, rng)
            scale = sobolev_norm(x.eta + x.theta, 1) * sobolev_norm(x.v, 1)
            assert skew_identity_check(x.eta, x.theta, x.v) <= 1e-12 * scale


class TestBilinearForm:
    p = FluidParams(mu=1.0, lam=0.3, kappa=0.8, eps=0.05)

    def B(self, x, y, delta=0.0, p=None):
        return bilinear_form_B(x, y, p or self.p, ZERO, ZERO, Z, Z, ZERO, delta)

    def test_term_dropout(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = random_state(GRID, rng)
            ref = dropout_closed_form(x, self.p)
            assert self.B(x, x) == pytest.approx(ref, rel=1e-12)

    def test_linear_in_delta(self):
        x = random_state(GRID, np.random.default_rng(4))
        gn = sobolev_norm(x.eta, 1) ** 2 - sobolev_norm(x.eta, 0) ** 2
        assert self.B(x, x, 0.7) - self.B(x, x, 0.0) == pytest.approx(0.7 * gn, rel=1e-12)

    def test_inverse_eps_terms_cancel_on_diagonal(self):
        # with zero coefficients, eps enters B(x; x) only through the
        # -eps (mu + zeta) cross term; the 1/eps couplings cancel exactly
        x = random_state(GRID, np.random.default_rng(5))
        b1 = self.B(x, x, p=self.p.with_eps(0.1))
        b2 = self.B(x, x, p=self.p.with_eps(0.001))
        cross = np.sum((1j * (GRID.k_deriv[0] * x.v[0].coeffs + GRID.k_deriv[1] * x.v[1].coeffs)
                        * np.conj((x.eta + x.theta).coeffs)).real)
        assert b1 - b2 == pytest.approx(-(0.1 - 0.001) * (self.p.mu + self.p.zeta) * cross, rel=1e-9)

    def test_bilinear(self):
        rng = np.random.default_rng(6)
        U = taylor_green(GRID, 0.5)
        x, y, z = (random_state(GRID, rng) for _ in range(3))
        comb = LinearizedSolution(x.eta * 2.0 + z.eta, x.v * 2.0 + z.v, x.theta * 2.0 + z.theta)
        args = (self.p, U, ZERO, Z, Z, taylor_green(GRID))
        lhs = bilinear_form_B(comb, y, *args)
        rhs = 2 * bilinear_form_B(x, y, *args) + bilinear_form_B(z, y, *args)
        assert lhs == pytest.approx(rhs, rel=1e-11)

    def test_coercivity_probe(self):
        s = coercivity_probe(self.p, ZERO, ZERO, Z, Z, ZERO, trials=30, rng=np.random.default_rng(7))
        assert s.min_ratio > 0 and s.inside_gate and s.trials == 30
        assert s.worst.coercivity_ratio == s.min_ratio
        d = energy_diagnostics(random_state(GRID, np.random.default_rng(8)), self.p, ZERO, ZERO, Z, Z, ZERO)
        assert d.skew_residual <= 1e-13
        assert d.coercivity_ratio == pytest.approx(d.B_quadratic / d.lower_bound_norms)

    def test_probe_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            coercivity_probe(self.p, ZERO, ZERO, Z, Z, ZERO, trials=0)


@pytest.fixture(scope="module")
def background():
    f = taylor_green(GRID, 1.0)
    ns = solve_incompressible_ns(f, ZERO, None, 1.0, tol=1e-13)
    return f, ns.U, ns.P


class TestSolveLinearized:
    def test_zero_background_gives_zero(self):
        x = solve_linearized(ZERO, Z, ZERO, Z, ZERO, FluidParams())
        assert x.inner_iters == 1
        assert sobolev_norm(x.eta, 0) == sobolev_norm(x.theta, 0) == sobolev_norm(x.v, 0) == 0

    def test_residual_and_means(self, background):
        f, U, P = background
        p = FluidParams(eps=0.05)
        x = solve_linearized(U, P, ZERO, Z, f, p, LinearizedOptions(tol=1e-13))
        res, dropped = linearized_residual(x, U, P, ZERO, Z, f, p)
        assert residual_norm(res) <= 1e-10
        assert x.residual == residual_norm(res)
        for fld_ in (x.eta, x.theta, *x.v):
            assert abs(fld_.coeffs[0, 0]) <= 1e-13
        # discarded energy mean equals eps * mean(Psi(U)); for this U it is eps / 4
        assert dropped[2] == pytest.approx(0.05 * 0.25, rel=1e-3)

    def test_two_seeds_agree(self, background):
        f, U, P = background
        p = FluidParams(eps=0.05)
        opts = LinearizedOptions(tol=1e-13)
        rng = np.random.default_rng(9)
        seeds = [None, random_state(GRID, rng)]
        xs = []
        for s in seeds:
            if s is not None:
                s = LinearizedSolution(s.eta * 0.05, s.v * 0.05, s.theta * 0.05)
            xs.append(solve_linearized(U, P, ZERO, Z, f, p, opts, x0=s))
        assert xs[0].h1_distance(xs[1]) <= 1e-9

    def test_delta_regularized(self, background):
        f, U, P = background
        p = FluidParams(eps=0.05)
        x = solve_linearized(U, P, ZERO, Z, f, p, LinearizedOptions(delta=0.1, tol=1e-13))
        res, _ = linearized_residual(x, U, P, ZERO, Z, f, p, delta=0.1)
        assert residual_norm(res) <= 1e-10

    def test_gates(self, background):
        f, U, P = background
        big = taylor_green(GRID, 1.0)
        with pytest.raises(SmallnessGateError):
            solve_linearized(U, P, big, Z, f, FluidParams(eps=0.05))
        with pytest.raises(SmallnessGateError):
            solve_linearized(U, P, ZERO, Z, f, FluidParams(eps=0.5))
