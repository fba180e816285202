"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are errors.  Keys and defaults:

=====================  =============================  ==========================================
key                    default                        meaning
=====================  =============================  ==========================================
n                      32                             grid points per axis (even, >= 8)
dealias_fraction       2/3                            retained fraction of the resolved band
mu                     1.0                            shear viscosity (> 0)
lambda                 0.0                            second viscosity (2 mu + 2 lambda >= 0)
kappa                  1.0                            heat conductivity (> 0)
eps                    0.05                           Mach number for ``solve``
eps_list               0.1, 0.05, 0.025, 0.0125       strictly decreasing ladder for ``sweep``
forcing                taylor_green                   taylor_green | kolmogorov | modes | zero
forcing_amplitude      1.0                            preset amplitude A
forcing_k              1                              kolmogorov wavenumber
forcing_target         f                              preset goes into f (density-weighted) or g
modes                  (empty)                        explicit list, see below
tol                    1e-10                          outer tolerance
max_outer              200
max_inner              2000
omega                  1.0                            relaxation in (0, 1]
inner_factor           0.001                          inner tolerance = tol * inner_factor
delta                  0.0                            mass-equation regularization (>= 0)
a0                     0.5                            gate on the compressive part of U + v
gate                   0.5                            gate on lagged v, theta
E                      0.5                            gate on ||v||_3 + ||theta||_3
eps0                   0.25                           largest admissible Mach number
force                  false                          bypass all gates
mms_case               taylor_green                   taylor_green | gradient_force | stokes_shear
trials                 20                             random trials per property in ``check``
seed                   0                              seed for every random probe
workers                1                              sweep processes
out                    .                              output directory
save_state             (empty)                        write a snapshot after ``solve``
load_state             (empty)                        warm start ``solve`` from a snapshot
timing                 false                          write wall times into the sweep CSV
=====================  =============================  ==========================================

``modes`` lists ``target:component:kx:ky:re:im`` entries separated by ``;``.
Each entry sets one normalized Fourier coefficient (``fft2(values)/n**2``)
of component ``component`` of ``f`` or ``g``.  The list must be Hermitian:
every ``(kx, ky)`` entry needs a ``(-kx, -ky)`` partner carrying the complex
conjugate, so the forcing is real.  For example ``(sin y, 0)`` in ``f`` is
``f:0:0:1:0:-0.5; f:0:0:-1:0:0.5``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fields import FluidParams, taylor_green
from .fixedpoint import SolverOptions
from .spectral import Grid, SpectralField, SpectralVectorField


class ConfigError(ValueError):
    """Invalid configuration text or values."""


FORCINGS = ("taylor_green", "kolmogorov", "modes", "zero")
MMS_CASES = ("taylor_green", "gradient_force", "stokes_shear")

# config key -> attribute name where they differ
_ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class Mode:
    target: str
    component: int
    kx: int
    ky: int
    coeff: complex

    def text(self) -> str:
        return f"{self.target}:{self.component}:{self.kx}:{self.ky}:{self.coeff.real!r}:{self.coeff.imag!r}"


@dataclass(frozen=True)
class RunConfig:
    n: int = 32
    dealias_fraction: Fraction = Fraction(2, 3)
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    eps: float = 0.05
    eps_list: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    forcing: str = "taylor_green"
    forcing_amplitude: float = 1.0
    forcing_k: int = 1
    forcing_target: str = "f"
    modes: tuple[Mode, ...] = ()
    tol: float = 1e-10
    max_outer: int = 200
    max_inner: int = 2000
    omega: float = 1.0
    inner_factor: float = 1e-3
    delta: float = 0.0
    a0: float = 0.5
    gate: float = 0.5
    E: float = 0.5
    eps0: float = 0.25
    force: bool = False
    mms_case: str = "taylor_green"
    trials: int = 20
    seed: int = 0
    workers: int = 1
    out: str = "."
    save_state: str = ""
    load_state: str = ""
    timing: bool = False

    def __post_init__(self):
        self.validate()

    # ---------------------------------------------------------------- checks
    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n >= 8 and self.n % 2 == 0, f"n must be even and >= 8 (got {self.n})")
        need(0 < self.dealias_fraction <= 1, f"dealias_fraction must lie in (0, 1] (got {self.dealias_fraction})")
        need(self.mu > 0, f"mu must be > 0 (got {self.mu})")
        need(self.kappa > 0, f"kappa must be > 0 (got {self.kappa})")
        need(2 * self.mu + 2 * self.lam >= 0, f"2*mu + 2*lambda must be >= 0 (got {2 * self.mu + 2 * self.lam})")
        need(0 < self.eps <= 1, f"eps must lie in (0, 1] (got {self.eps})")
        need(len(self.eps_list) > 0, "eps_list must not be empty")
        need(all(0 < e <= 1 for e in self.eps_list), f"eps_list entries must lie in (0, 1] (got {self.eps_list})")
        need(all(b < a for a, b in zip(self.eps_list, self.eps_list[1:])),
             f"eps_list must be strictly decreasing (got {self.eps_list})")
        need(self.forcing in FORCINGS, f"forcing must be one of {FORCINGS} (got {self.forcing!r})")
        need(self.forcing_target in ("f", "g"), f"forcing_target must be f or g (got {self.forcing_target!r})")
        need(self.forcing_k >= 1, f"forcing_k must be >= 1 (got {self.forcing_k})")
        need(2 * self.forcing_k < self.n, f"forcing_k must be below n/2 (got {self.forcing_k})")
        for name in ("tol", "inner_factor"):
            need(getattr(self, name) > 0, f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("a0", "gate", "E", "eps0"):
            need(getattr(self, name) > 0, f"gate {name} must be > 0 (got {getattr(self, name)})")
        need(0 < self.omega <= 1, f"omega must lie in (0, 1] (got {self.omega})")
        need(self.delta >= 0, f"delta must be >= 0 (got {self.delta})")
        need(self.max_outer >= 1 and self.max_inner >= 1, "max_outer and max_inner must be >= 1")
        need(self.trials >= 1, f"trials must be >= 1 (got {self.trials})")
        need(self.workers >= 1, f"workers must be >= 1 (got {self.workers})")
        need(self.seed >= 0, f"seed must be >= 0 (got {self.seed})")
        need(self.mms_case in MMS_CASES, f"mms_case must be one of {MMS_CASES} (got {self.mms_case!r})")
        if self.forcing == "modes":
            need(len(self.modes) > 0, "forcing = modes needs a non-empty modes list")
        _check_modes(self.modes, self.n)

    # ------------------------------------------------------------- builders
    def grid(self) -> Grid:
        return Grid(self.n, 2, self.dealias_fraction)

    def params(self, eps: float | None = None) -> FluidParams:
        return FluidParams(self.mu, self.lam, self.kappa, self.eps if eps is None else eps)

    def solver_options(self, force: bool | None = None) -> SolverOptions:
        return SolverOptions(tol=self.tol, max_outer=self.max_outer, max_inner=self.max_inner,
                             omega=self.omega, delta=self.delta, a0=self.a0, gate=self.gate, E=self.E,
                             eps0=self.eps0, inner_factor=self.inner_factor,
                             force=self.force if force is None else force)

    def forcing_fields(self, grid: Grid | None = None) -> tuple[SpectralVectorField, SpectralVectorField]:
        """``(f, g)`` on ``grid`` (default: the configured grid)."""
        grid = grid or self.grid()
        zero = SpectralVectorField.zeros(grid)
        A = self.forcing_amplitude
        if self.forcing == "zero":
            return zero, zero
        if self.forcing == "modes":
            arrs = {t: [np.zeros(grid.shape, dtype=complex) for _ in range(2)] for t in ("f", "g")}
            for m in self.modes:
                arrs[m.target][m.component][m.kx % grid.n, m.ky % grid.n] = m.coeff
            return (SpectralVectorField.from_arrays(grid, arrs["f"]),
                    SpectralVectorField.from_arrays(grid, arrs["g"]))
        if self.forcing == "taylor_green":
            h = taylor_green(grid, A)
        else:
            k = self.forcing_k
            h = SpectralVectorField((SpectralField.from_function(grid, lambda x, y: A * np.sin(k * y)),
                                     SpectralField.zeros(grid)))
        return (h, zero) if self.forcing_target == "f" else (zero, h)

    def with_(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # ------------------------------------------------------------- text I/O
    def to_text(self) -> str:
        lines = []
        for fld in fields(self):
            key = next((k for k, a in _ALIASES.items() if a == fld.name), fld.name)
            lines.append(f"{key} = {_format(getattr(self, fld.name))}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = {}
        for fld in fields(self):
            v = getattr(self, fld.name)
            if isinstance(v, Fraction):
                v = str(v)
            elif fld.name == "modes":
                v = [m.text() for m in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[fld.name] = v
        return out


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], Mode):
            return "; ".join(m.text() for m in v)
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_modes(s: str) -> tuple[Mode, ...]:
    out = []
    for item in filter(None, (x.strip() for x in s.split(";"))):
        parts = item.split(":")
        if len(parts) != 6:
            raise ValueError(f"mode entry {item!r} is not target:component:kx:ky:re:im")
        t, comp, kx, ky, re, im = parts
        if t not in ("f", "g"):
            raise ValueError(f"mode target must be f or g (got {t!r})")
        out.append(Mode(t, int(comp), int(kx), int(ky), complex(float(re), float(im))))
    return tuple(out)


def _check_modes(modes: tuple[Mode, ...], n: int) -> None:
    table = {}
    for m in modes:
        if m.component not in (0, 1):
            raise ConfigError(f"mode component must be 0 or 1 (got {m.component})")
        if max(abs(m.kx), abs(m.ky)) >= n // 2:
            raise ConfigError(f"mode ({m.kx}, {m.ky}) is outside the resolved band |k| < {n // 2}")
        key = (m.target, m.component, m.kx, m.ky)
        if key in table:
            raise ConfigError(f"duplicate mode {key}")
        table[key] = m.coeff
    for (t, comp, kx, ky), c in table.items():
        partner = table.get((t, comp, -kx, -ky))
        if partner is None or abs(partner - c.conjugate()) > 1e-14 * max(1.0, abs(c)):
            raise ConfigError(f"modes are not Hermitian: ({t}, {comp}, {kx}, {ky}) lacks a conjugate "
                              f"partner at ({-kx}, {-ky}); the forcing must be real")


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    Fraction: Fraction,
}


def parse(text: str) -> RunConfig:
    """Parse configuration text.

    Raises:
        ConfigError: syntax errors, unknown keys, bad values or violated invariants.
    """
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if name == "eps_list":
                values[name] = tuple(float(x) for x in val.split(",") if x.strip())
            elif name == "modes":
                values[name] = _parse_modes(val)
            else:
                typ = types[name]
                typ = {"int": int, "float": float, "str": str, "bool": bool, "Fraction": Fraction}.get(typ, typ)
                values[name] = _PARSERS[typ](val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(**values)


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text)
