"""Independent reference evaluations for the test-suite.

Everything here works on raw numpy arrays: coefficients are lifted onto a
finer grid, derivatives are taken there with their own wavenumber arrays, and
products are plain pointwise products.  For band-limited inputs whose
products stay inside the retained band this is exact, so it serves as an
oracle for the dealiased operators of the package.
"""

import numpy as np

NF = 128  # fine grid


def embed(coeffs, nf=NF):
    n = coeffs.shape[0]
    k = np.fft.fftfreq(n, 1 / n).astype(int)
    # Nyquist row/column of the coarse grid is never populated by band-limited fields
    out = np.zeros((nf, nf), dtype=complex)
    out[np.ix_(k % nf, k % nf)] = coeffs
    return out


def restrict(fine_coeffs, n):
    nf = fine_coeffs.shape[0]
    k = np.fft.fftfreq(n, 1 / n).astype(int)
    return fine_coeffs[np.ix_(k % nf, k % nf)]


class Fine:
    """A real field sampled on the fine grid."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    @classmethod
    def lift(cls, field, nf=NF):
        c = embed(np.asarray(field.coeffs), nf)
        return cls(np.real(np.fft.ifft2(c) * nf * nf))

    def coeffs(self):
        nf = self.values.shape[0]
        return np.fft.fft2(self.values) / (nf * nf)

    def d(self, axis):
        nf = self.values.shape[0]
        k = np.fft.fftfreq(nf, 1 / nf)
        kk = k[:, None] if axis == 0 else k[None, :]
        return Fine(np.real(np.fft.ifft2(1j * kk * np.fft.fft2(self.values))))

    def lap(self):
        return Fine(self.d(0).d(0).values + self.d(1).d(1).values)

    def __add__(self, o):
        return Fine(self.values + (o.values if isinstance(o, Fine) else o))

    __radd__ = __add__

    def __sub__(self, o):
        return Fine(self.values - (o.values if isinstance(o, Fine) else o))

    def __rsub__(self, o):
        return Fine((o.values if isinstance(o, Fine) else o) - self.values)

    def __mul__(self, o):
        return Fine(self.values * (o.values if isinstance(o, Fine) else o))

    __rmul__ = __mul__

    def __truediv__(self, s):
        return Fine(self.values / s)

    def __neg__(self):
        return Fine(-self.values)

    def to_coarse(self, n):
        return restrict(self.coeffs(), n)


def lift_vec(v):
    return [Fine.lift(c) for c in v]


def div(u):
    return u[0].d(0) + u[1].d(1)


def adv(a, f):
    return a[0] * f.d(0) + a[1] * f.d(1)


def psi(u, mu, lam):
    d00, d11 = u[0].d(0), u[1].d(1)
    d01 = (u[0].d(1) + u[1].d(0)) * 0.5
    dd = d00 * d00 + d11 * d11 + d01 * d01 * 2.0
    dv = d00 + d11
    return dd * (2 * mu) + dv * dv * lam


def primitive_residual(u, rho, theta, f, g, mu, lam, kappa, eps):
    """Scaled physical system in density, velocity and temperature; returns fine fields."""
    zeta = mu + lam
    vr = 1 + rho * eps
    T = 1 + theta * eps
    p = vr * T
    dv = div(u)
    mass = div([vr * u[0], vr * u[1]])
    mom = []
    for i in range(2):
        visc = u[i].lap() * mu + dv.d(i) * zeta
        mom.append(vr * adv(u, u[i]) + p.d(i) / eps**2 - visc - vr * f[i] - g[i])
    energy = vr * adv(u, T) + p * dv - T.lap() * kappa - psi(u, mu, lam) * eps**2
    return mass, mom, energy


def symbol(k, p, delta):
    """4x4 symbol of the constant-coefficient operator, unknowns (eta, v0, v1, theta),
    written directly from the PDE: mass, two momentum rows, energy."""
    kx, ky = k
    s2 = kx * kx + ky * ky
    e = p.eps
    return np.array([
        [delta * s2, 1j * kx / e, 1j * ky / e, 0],
        [1j * kx / e, p.mu * s2 + p.zeta * kx * kx, p.zeta * kx * ky, 1j * kx / e],
        [1j * ky / e, p.zeta * kx * ky, p.mu * s2 + p.zeta * ky * ky, 1j * ky / e],
        [0, 1j * kx / e, 1j * ky / e, p.kappa * s2],
    ], dtype=complex)


def _wavenumbers(n):
    kx, ky = np.meshgrid(np.fft.fftfreq(n, 1 / n), np.fft.fftfreq(n, 1 / n), indexing="ij")
    kx[n // 2, :] = 0
    ky[:, n // 2] = 0
    return kx, ky


def dropout_closed_form(x, p):
    """B(x; x) with all coefficient fields zero and delta = 0, from raw coefficients:
    ||eta+theta||^2 + mu||grad v||^2 + zeta||div v||^2 + kappa||grad theta||^2
    - eps (mu + zeta) int div v (eta + theta)."""
    kx, ky = _wavenumbers(x.eta.coeffs.shape[0])
    s2 = kx**2 + ky**2
    e, t = x.eta.coeffs, x.theta.coeffs
    v0, v1 = x.v[0].coeffs, x.v[1].coeffs
    dv = 1j * (kx * v0 + ky * v1)
    s = e + t
    sq = lambda a: np.sum(np.abs(a) ** 2)
    return float(sq(s) + p.mu * np.sum(s2 * (np.abs(v0) ** 2 + np.abs(v1) ** 2)) + p.zeta * sq(dv)
                 + p.kappa * np.sum(s2 * np.abs(t) ** 2)
                 - p.eps * (p.mu + p.zeta) * np.sum((dv * np.conj(s)).real))


def coercivity_denominator(x):
    """||eta||_0^2 + ||v||_1^2 + ||theta||_1^2 with weights (1 + |k|^2)."""
    kx, ky = _wavenumbers(x.eta.coeffs.shape[0])
    w = 1 + kx**2 + ky**2
    sq = lambda a: np.sum(np.abs(a) ** 2)
    return float(sq(x.eta.coeffs) + np.sum(w * (np.abs(x.v[0].coeffs) ** 2 + np.abs(x.v[1].coeffs) ** 2))
                 + np.sum(w * np.abs(x.theta.coeffs) ** 2))
