"""Periodic pseudo-spectral kernel on the 2D torus [0, 2*pi)^2.

Fields are stored as complex Fourier coefficients in numpy FFT order, scaled
so that ``coeffs[0, 0]`` is the mean of the field and Parseval reads
``mean(f**2) == sum(|coeffs|**2)``.  With that normalization the domain has
unit measure and all discrete norms below are directly comparable.

Axis 0 is ``x``, axis 1 is ``y`` (``indexing="ij"``).  Integer wavenumbers run
over ``-n/2+1 .. n/2``; the Nyquist mode is dropped by odd-order derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import NonZeroMean

MEAN_TOL = 1e-13


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis."""

    n: int
    dim: int = 2
    dealias_fraction: Fraction = Fraction(2, 3)

    def __post_init__(self):
        if self.dim != 2:
            raise ValueError("only dim=2 is supported")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        object.__setattr__(self, "dealias_fraction", Fraction(self.dealias_fraction))
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @cached_property
    def k1d(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, Nyquist taken as +n/2."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray]:
        kx, ky = np.meshgrid(self.k1d, self.k1d, indexing="ij")
        return kx, ky

    @cached_property
    def k_deriv(self) -> tuple[np.ndarray, np.ndarray]:
        # Nyquist row/column has no real-valued odd derivative.
        kd = self.k1d.copy()
        kd[self.n // 2] = 0.0
        kx, ky = np.meshgrid(kd, kd, indexing="ij")
        return kx, ky

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky = self.k
        return kx**2 + ky**2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        out = 1.0 / k2
        out[0, 0] = 0.0
        return out

    @cached_property
    def kmax_resolved(self) -> int:
        """Largest wavenumber per axis kept by the dealiasing truncation."""
        return int(np.floor(self.dealias_fraction * (self.n // 2)))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kx, ky = self.k
        kc = self.kmax_resolved
        return (np.abs(kx) <= kc) & (np.abs(ky) <= kc)

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of the collocation points."""
        x1 = 2.0 * np.pi * np.arange(self.n) / self.n
        return tuple(np.meshgrid(x1, x1, indexing="ij"))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real periodic scalar field held as Fourier coefficients.

    The coefficient array is made read-only on construction; arithmetic
    returns new fields.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        return cls(grid, np.fft.fft2(values) / grid.n**2)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "SpectralField":
        """Sample ``fn(x, y)`` on the collocation grid."""
        x, y = grid.x
        return cls.from_physical(grid, np.broadcast_to(fn(x, y), grid.shape))

    def to_physical(self) -> np.ndarray:
        return np.fft.ifft2(self.coeffs).real * self.grid.n**2

    # views ----------------------------------------------------------------
    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def coeff(self, kx: int, ky: int) -> complex:
        n = self.grid.n
        return complex(self.coeffs[kx % n, ky % n])

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0, 0] += other
        return SpectralField(self.grid, c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, self.coeffs - other.coeffs)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use dealiased_product for field products")
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / float(scalar))


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """``dim`` scalar components on one grid."""

    components: tuple[SpectralField, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        g = comps[0].grid
        if any(c.grid != g for c in comps):
            raise ValueError("all components must share one grid")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralVectorField":
        return cls(tuple(SpectralField.zeros(grid) for _ in range(grid.dim)))

    @classmethod
    def from_arrays(cls, grid: Grid, coeffs: Iterable[np.ndarray]) -> "SpectralVectorField":
        return cls(tuple(SpectralField(grid, c) for c in coeffs))

    @classmethod
    def from_function(cls, grid: Grid, *fns) -> "SpectralVectorField":
        return cls(tuple(SpectralField.from_function(grid, fn) for fn in fns))

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def coeffs(self) -> np.ndarray:
        """Stacked coefficients, shape ``(dim, n, n)`` (a fresh array)."""
        return np.stack([c.coeffs for c in self.components])

    def __getitem__(self, i: int) -> SpectralField:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __add__(self, other: "SpectralVectorField"):
        return SpectralVectorField(tuple(a + b for a, b in zip(self, other)))

    def __sub__(self, other: "SpectralVectorField"):
        return SpectralVectorField(tuple(a - b for a, b in zip(self, other)))

    def __neg__(self):
        return SpectralVectorField(tuple(-a for a in self))

    def __mul__(self, scalar):
        return SpectralVectorField(tuple(a * scalar for a in self))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralVectorField(tuple(a / scalar for a in self))


Field = SpectralField | SpectralVectorField


# differential operators ---------------------------------------------------

def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along ``axis``."""
    return SpectralField(f.grid, 1j * f.grid.k_deriv[axis] * f.coeffs)


def gradient(f: SpectralField) -> SpectralVectorField:
    return SpectralVectorField(tuple(derivative(f, i) for i in range(f.grid.dim)))


def divergence(u: SpectralVectorField) -> SpectralField:
    kd = u.grid.k_deriv
    return SpectralField(u.grid, sum(1j * kd[i] * c.coeffs for i, c in enumerate(u)))


def laplacian(f: Field) -> Field:
    """Laplacian built from the same derivative symbols as div and grad.

    Using ``sum(-(k_deriv)**2)`` rather than ``-|k|**2`` keeps
    ``divergence(gradient(f)) == laplacian(f)`` exact in coefficients.
    """
    if isinstance(f, SpectralVectorField):
        return SpectralVectorField(tuple(laplacian(c) for c in f))
    kx, ky = f.grid.k_deriv
    return SpectralField(f.grid, -(kx * kx + ky * ky) * f.coeffs)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Solve ``laplacian(g) == f`` for mean-zero ``g``.

    Raises:
        NonZeroMean: if ``f`` carries a mean above 1e-13.
    """
    if abs(f.coeffs[0, 0]) > MEAN_TOL:
        raise NonZeroMean(f"inverse_laplacian needs a mean-zero field, got mean {f.coeffs[0, 0]:.3e}")
    kx, ky = f.grid.k_deriv
    k2 = kx * kx + ky * ky
    out = np.zeros_like(f.coeffs)
    nz = k2 > 0
    out[nz] = -f.coeffs[nz] / k2[nz]
    return SpectralField(f.grid, out)


def mean_zero_project(f: Field) -> Field:
    if isinstance(f, SpectralVectorField):
        return SpectralVectorField(tuple(mean_zero_project(c) for c in f))
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField(f.grid, c)


def truncate(f: Field) -> Field:
    """Zero every mode outside the dealiasing band."""
    if isinstance(f, SpectralVectorField):
        return SpectralVectorField(tuple(truncate(c) for c in f))
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def dealiased_product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Pointwise product with 2/3-rule truncation before and after."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    g = a.grid
    m = g.dealias_mask
    n2 = g.n**2
    pa = np.fft.ifft2(a.coeffs * m).real
    pb = np.fft.ifft2(b.coeffs * m).real
    return SpectralField(g, np.fft.fft2(pa * pb) * n2 * m)


def dot(a: SpectralVectorField, b: SpectralVectorField) -> SpectralField:
    """Dealiased pointwise inner product ``a . b``."""
    out = dealiased_product(a[0], b[0])
    for i in range(1, len(a)):
        out = out + dealiased_product(a[i], b[i])
    return out


def scale(s: SpectralField, u: SpectralVectorField) -> SpectralVectorField:
    """Dealiased scalar-times-vector product."""
    return SpectralVectorField(tuple(dealiased_product(s, c) for c in u))


def advect(a: SpectralVectorField, f: Field) -> Field:
    """Dealiased directional derivative ``(a . grad) f`` of a scalar or vector."""
    if isinstance(f, SpectralVectorField):
        return SpectralVectorField(tuple(advect(a, c) for c in f))
    return dot(a, gradient(f))


def leray_project(u: SpectralVectorField) -> SpectralVectorField:
    """Divergence-free part of ``u`` (mean kept)."""
    g = u.grid
    kd = g.k_deriv
    c = u.coeffs
    k2 = kd[0] ** 2 + kd[1] ** 2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    kdotc = kd[0] * c[0] + kd[1] * c[1]
    return SpectralVectorField.from_arrays(g, [c[i] - kd[i] * kdotc * inv for i in range(2)])


# norms ---------------------------------------------------------------------

def sobolev_norm(f: Field, m: int) -> float:
    """Discrete ``H^m`` norm with weight ``(1 + |k|^2)^m``, ``m`` in -1..4."""
    if m not in (-1, 0, 1, 2, 3, 4):
        raise ValueError(f"unsupported Sobolev index {m}")
    if isinstance(f, SpectralVectorField):
        return float(np.sqrt(sum(sobolev_norm(c, m) ** 2 for c in f)))
    w = (1.0 + f.grid.k2) ** m
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def inner(a: Field, b: Field) -> float:
    """Unit-measure L2 inner product ``integral(a * b)`` computed by Parseval."""
    if isinstance(a, SpectralVectorField):
        return sum(inner(x, y) for x, y in zip(a, b))
    return float(np.sum(a.coeffs * np.conj(b.coeffs)).real)


def quadrature_mean(values: np.ndarray) -> float:
    """Mean of physical samples, i.e. the integral over the unit-measure torus."""
    return float(np.mean(values))


def random_field(grid: Grid, rng: np.random.Generator, bandwidth: int | None = None,
                 mean_zero: bool = True, amplitude: float = 1.0) -> SpectralField:
    """Random real field with modes ``|k_i| <= bandwidth`` (default: dealias band).

    Coefficients decay like ``(1 + |k|^2)^-2`` so higher norms stay O(1).
    """
    bw = grid.kmax_resolved if bandwidth is None else bandwidth
    kx, ky = grid.k
    band = (np.abs(kx) <= bw) & (np.abs(ky) <= bw)
    raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    raw *= band / (1.0 + grid.k2) ** 2
    # enforce Hermitian symmetry through a physical-space round trip
    phys = np.fft.ifft2(raw).real
    c = np.fft.fft2(phys) * band
    c[grid.n // 2, :] = 0.0
    c[:, grid.n // 2] = 0.0
    if mean_zero:
        c[0, 0] = 0.0
    f = SpectralField(grid, c)
    norm = sobolev_norm(f, 0)
    return f * (amplitude / norm) if norm > 0 else f


def random_vector(grid: Grid, rng: np.random.Generator, **kw) -> SpectralVectorField:
    return SpectralVectorField(tuple(random_field(grid, rng, **kw) for _ in range(grid.dim)))
