import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowmach.errors import NonZeroMean
from lowmach.spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    dealiased_product,
    derivative,
    divergence,
    gradient,
    inverse_laplacian,
    laplacian,
    mean_zero_project,
    random_field,
    sobolev_norm,
)

GRID = Grid(32)


def fld(fn, grid=GRID):
    return SpectralField.from_function(grid, fn)


def assert_field_close(a, b, atol=1e-13):
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=0, atol=atol)


class TestGrid:
    def test_rejects_small_or_odd(self):
        with pytest.raises(ValueError):
            Grid(6)
        with pytest.raises(ValueError):
            Grid(33)

    def test_wavenumber_range(self):
        g = Grid(16)
        assert sorted(g.k1d) == list(range(-7, 9))

    def test_dealias_band(self):
        assert Grid(32).kmax_resolved == 10
        assert Grid(32, dealias_fraction=1).kmax_resolved == 16


class TestDerivative:
    def test_sin_to_cos(self):
        assert_field_close(derivative(fld(lambda x, y: np.sin(x)), 0), fld(lambda x, y: np.cos(x)))

    def test_constant_to_zero(self):
        d = derivative(fld(lambda x, y: 3.0 + 0 * x), 1)
        assert np.abs(d.coeffs).max() == 0.0

    def test_matches_finite_differences_on_fine_line(self):
        # oracle: 4th-order central differences of exp(sin x) on 4096 points
        n = 4096
        x = 2 * np.pi * np.arange(n) / n
        h = x[1]
        fvals = np.exp(np.sin(x))
        fd = (-np.roll(fvals, -2) + 8 * np.roll(fvals, -1) - 8 * np.roll(fvals, 1) + np.roll(fvals, 2)) / (12 * h)
        g = Grid(64)
        f = fld(lambda x, y: np.exp(np.sin(x)), g)
        spec = derivative(f, 0).to_physical()[:, 0]
        # compare at the 64 coarse points that coincide with the fine grid
        np.testing.assert_allclose(spec, fd[:: n // 64], atol=1e-6)

    def test_mean_zero_result(self):
        f = random_field(GRID, np.random.default_rng(0), mean_zero=False)
        assert derivative(f, 0).coeffs[0, 0] == 0


class TestVectorCalculus:
    def test_divergence_of_shear_is_zero(self):
        u = SpectralVectorField((fld(lambda x, y: np.sin(y)), SpectralField.zeros(GRID)))
        assert np.abs(divergence(u).coeffs).max() < 1e-15

    def test_laplacian_of_sin(self):
        assert_field_close(laplacian(fld(lambda x, y: np.sin(x))), fld(lambda x, y: -np.sin(x)))

    def test_div_grad_is_laplacian(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            f = random_field(GRID, rng, mean_zero=False, bandwidth=16)
            assert np.abs(divergence(gradient(f)).coeffs - laplacian(f).coeffs).max() <= 1e-14


class TestInverseLaplacian:
    def test_sin(self):
        assert_field_close(inverse_laplacian(fld(lambda x, y: np.sin(x))), fld(lambda x, y: -np.sin(x)))

    def test_zero(self):
        assert np.abs(inverse_laplacian(SpectralField.zeros(GRID)).coeffs).max() == 0

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            f = random_field(GRID, rng)
            assert_field_close(laplacian(inverse_laplacian(f)), f, atol=1e-13)

    def test_nonzero_mean_raises(self):
        with pytest.raises(NonZeroMean):
            inverse_laplacian(fld(lambda x, y: 1.0 + np.sin(x)))


class TestDealiasedProduct:
    def test_constant_factor_truncates(self):
        b = fld(lambda x, y: np.sin(x) + np.cos(14 * y))
        out = dealiased_product(fld(lambda x, y: 1.0 + 0 * x), b)
        assert_field_close(out, fld(lambda x, y: np.sin(x)))

    def test_product_to_sum(self):
        s = fld(lambda x, y: np.sin(x))
        assert_field_close(dealiased_product(s, s), fld(lambda x, y: 0.5 - 0.5 * np.cos(2 * x)))

    def test_matches_oversampled_quadrature(self):
        # oracle: evaluate both band-limited fields on a 4x finer grid,
        # multiply pointwise, and project back onto the coarse modes
        rng = np.random.default_rng(3)
        fine = Grid(128)
        for _ in range(5):
            a = random_field(GRID, rng, bandwidth=5, mean_zero=False)
            b = random_field(GRID, rng, bandwidth=5, mean_zero=False)
            pad = lambda f: SpectralField(fine, _embed(f.coeffs, 128))
            prod_fine = SpectralField.from_physical(fine, pad(a).to_physical() * pad(b).to_physical())
            expected = _restrict(prod_fine.coeffs, 32)
            np.testing.assert_allclose(dealiased_product(a, b).coeffs, expected, atol=1e-12)

    def test_bilinear_symmetric(self):
        rng = np.random.default_rng(4)
        a, b, c = (random_field(GRID, rng) for _ in range(3))
        assert_field_close(dealiased_product(a, b), dealiased_product(b, a), atol=1e-15)
        lhs = dealiased_product(a * 2.0 + c, b)
        rhs = dealiased_product(a, b) * 2.0 + dealiased_product(c, b)
        assert_field_close(lhs, rhs, atol=1e-14)


def _embed(c, n_fine):
    n = c.shape[0]
    k = np.fft.fftfreq(n, 1 / n).astype(int)
    out = np.zeros((n_fine, n_fine), dtype=complex)
    for i, kx in enumerate(k):
        for j, ky in enumerate(k):
            out[kx % n_fine, ky % n_fine] = c[i, j]
    return out


def _restrict(c, n):
    nf = c.shape[0]
    k = np.fft.fftfreq(n, 1 / n).astype(int)
    out = np.zeros((n, n), dtype=complex)
    for i, kx in enumerate(k):
        for j, ky in enumerate(k):
            out[i, j] = c[kx % nf, ky % nf]
    return out


class TestSobolevNorm:
    def test_sin_l2_against_quadrature(self):
        # oracle: mean square of sin on a 1e6-point line
        x = 2 * np.pi * np.arange(1_000_000) / 1_000_000
        ms = np.mean(np.sin(x) ** 2)
        assert sobolev_norm(fld(lambda x, y: np.sin(x)), 0) == pytest.approx(np.sqrt(ms), abs=1e-12)
        assert sobolev_norm(fld(lambda x, y: np.sin(x)), 0) == pytest.approx(1 / np.sqrt(2), abs=1e-14)

    def test_sin_h1(self):
        x = 2 * np.pi * np.arange(1_000_000) / 1_000_000
        h1sq = np.mean(np.sin(x) ** 2) + np.mean(np.cos(x) ** 2)
        assert sobolev_norm(fld(lambda x, y: np.sin(x)), 1) == pytest.approx(np.sqrt(h1sq), abs=1e-12)

    @pytest.mark.parametrize("m", [-1, 0, 1, 2, 3, 4])
    def test_zero(self, m):
        assert sobolev_norm(SpectralField.zeros(GRID), m) == 0.0

    def test_monotone_in_m(self):
        f = random_field(GRID, np.random.default_rng(5))
        norms = [sobolev_norm(f, m) for m in range(5)]
        assert all(a <= b for a, b in zip(norms, norms[1:]))

    def test_rejects_bad_index(self):
        with pytest.raises(ValueError):
            sobolev_norm(SpectralField.zeros(GRID), 5)


class TestMeanZeroProject:
    def test_removes_constant(self):
        assert_field_close(mean_zero_project(fld(lambda x, y: np.sin(x) + 3)), fld(lambda x, y: np.sin(x)))

    def test_idempotent(self):
        f = random_field(GRID, np.random.default_rng(6), mean_zero=False)
        once = mean_zero_project(f)
        assert np.array_equal(mean_zero_project(once).coeffs, once.coeffs)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_parseval(seed):
    f = random_field(GRID, np.random.default_rng(seed), mean_zero=False, bandwidth=16)
    quad = np.mean(f.to_physical() ** 2)
    assert sobolev_norm(f, 0) ** 2 == pytest.approx(quad, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_transform_round_trip(seed):
    vals = np.random.default_rng(seed).standard_normal((32, 32))
    back = SpectralField.from_physical(GRID, vals).to_physical()
    assert np.linalg.norm(back - vals) <= 1e-13 * np.linalg.norm(vals)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0, 1]))
def test_derivative_commutes_with_projection(seed, axis):
    f = random_field(GRID, np.random.default_rng(seed), mean_zero=False)
    a = derivative(mean_zero_project(f), axis)
    b = mean_zero_project(derivative(f, axis))
    assert np.array_equal(a.coeffs, b.coeffs)
