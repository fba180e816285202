"""Binary snapshot of a split state.

Layout (all integers unsigned, all numbers little-endian)::

    magic        8 bytes   b"LOWMACH1"
    n            u32       grid points per axis
    dim          u32       spatial dimension (2)
    dealias      2 x u32   numerator, denominator of the dealias fraction
    eps          f64       Mach number the state was computed for
    nfields      u32
    then per field:
      name_len   u16
      name       name_len bytes, UTF-8
      n          u32       repeated for self-description
      coeffs     n*n complex numbers, each (re: f64, im: f64)

Coefficients are normalized (``fft2(values) / n**2``) and stored row-major
in FFT wavenumber order: row ``i`` has ``kx = fftfreq(n, 1/n)[i]``, column
``j`` has ``ky = fftfreq(n, 1/n)[j]``.  Field names are ``U0, U1, P, v0,
v1, eta, theta``.
"""

from __future__ import annotations

import struct
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fields import SplitState
from .spectral import Grid, SpectralField, SpectralVectorField

MAGIC = b"LOWMACH1"
FIELD_NAMES = ("U0", "U1", "P", "v0", "v1", "eta", "theta")
_DTYPE = np.dtype("<c16")


def _fields(s: SplitState) -> dict[str, SpectralField]:
    return {"U0": s.U[0], "U1": s.U[1], "P": s.P, "v0": s.v[0], "v1": s.v[1],
            "eta": s.eta, "theta": s.theta}


def dumps(state: SplitState, eps: float) -> bytes:
    g = state.P.grid
    frac = Fraction(g.dealias_fraction)
    out = [MAGIC, struct.pack("<II", g.n, g.dim), struct.pack("<II", frac.numerator, frac.denominator),
           struct.pack("<d", eps)]
    fields = _fields(state)
    out.append(struct.pack("<I", len(fields)))
    for name, fld in fields.items():
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", g.n))
        out.append(np.ascontiguousarray(fld.coeffs, dtype=_DTYPE).tobytes())
    return b"".join(out)


def loads(data: bytes) -> tuple[SplitState, float]:
    """Inverse of :func:`dumps`; returns the state and its ``eps``.

    Raises:
        ValueError: malformed or truncated data.
    """
    if data[:8] != MAGIC:
        raise ValueError("not a state snapshot (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValueError("truncated snapshot")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    n, dim = take("<II")
    num, den = take("<II")
    (eps,) = take("<d")
    (nfields,) = take("<I")
    grid = Grid(n, dim, Fraction(num, den))
    arrays = {}
    for _ in range(nfields):
        (ln,) = take("<H")
        name = data[pos:pos + ln].decode()
        pos += ln
        (nf,) = take("<I")
        if nf != n:
            raise ValueError(f"field {name} has n={nf}, grid has n={n}")
        size = n * n * _DTYPE.itemsize
        if pos + size > len(data):
            raise ValueError("truncated snapshot")
        arrays[name] = np.frombuffer(data, dtype=_DTYPE, count=n * n, offset=pos).reshape(n, n).astype(complex)
        pos += size
    missing = set(FIELD_NAMES) - set(arrays)
    if missing:
        raise ValueError(f"snapshot lacks fields {sorted(missing)}")
    F = lambda k: SpectralField(grid, arrays[k])
    state = SplitState(SpectralVectorField((F("U0"), F("U1"))), F("P"),
                       SpectralVectorField((F("v0"), F("v1"))), F("eta"), F("theta"))
    return state, eps


def save(path: str | Path, state: SplitState, eps: float) -> None:
    Path(path).write_bytes(dumps(state, eps))


def load(path: str | Path) -> tuple[SplitState, float]:
    return loads(Path(path).read_bytes())
