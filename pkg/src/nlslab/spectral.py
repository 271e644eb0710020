"""Periodic grid, discrete Fourier transforms, Fourier multipliers and norms.

Transform convention
--------------------
Samples live at ``x_j = -L/2 + j*dx`` for ``j = 0..M-1``.  The spectrum of a
field is the array of Fourier coefficients

    c_k = (1/M) * sum_j f(x_j) exp(-2*pi*i*j*k/M),

in numpy FFT ordering, so that ``f(x_j) = sum_k c_k exp(i*xi_k*(x_j - x_0))``
with ``xi_k = 2*pi*k/L``.  The continuous transform is approximated by
``f_hat(xi_k) ~ L * c_k`` (up to the unit-modulus phase from the grid
origin), and discrete Parseval reads

    sum_j |f(x_j)|^2 dx = L * sum_k |c_k|^2.

Every norm, inner product and multilinear quadrature in the package takes its
weights from this identity.  The Nyquist coefficient (k = -M/2) is zeroed
after every multiplier application so that even symbols stay even.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np


class ConfigurationError(ValueError):
    """Invalid grid, symbol or experiment parameters."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values or failed to converge."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-box_length/2, box_length/2)``."""

    num_modes: int
    box_length: float

    def __post_init__(self):
        if not isinstance(self.num_modes, (int, np.integer)) or not _is_power_of_two(int(self.num_modes)):
            raise ConfigurationError(f"num_modes must be a power of two, got {self.num_modes!r}")
        if self.num_modes < 16:
            raise ConfigurationError(f"num_modes must be >= 16, got {self.num_modes}")
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise ConfigurationError(f"box_length must be positive, got {self.box_length!r}")

    @property
    def dx(self) -> float:
        return self.box_length / self.num_modes

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.box_length + self.dx * np.arange(self.num_modes)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers in FFT order; the Nyquist mode carries -M/2."""
        return np.fft.fftfreq(self.num_modes, d=1.0 / self.num_modes).astype(np.int64)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2.0 * np.pi * self.k / self.box_length

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.box_length

    @property
    def xi_max(self) -> float:
        """Largest resolved frequency magnitude (the Nyquist frequency)."""
        return np.pi * self.num_modes / self.box_length

    @property
    def nyquist_index(self) -> int:
        return self.num_modes // 2


Array = np.ndarray


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a :class:`GridSpec`.

    Fields are treated as immutable values; the spectrum is computed lazily
    and cached.
    """

    grid: GridSpec
    values: Array

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != (self.grid.num_modes,):
            raise ConfigurationError(
                f"field has shape {vals.shape}, grid expects ({self.grid.num_modes},)"
            )
        if not np.all(np.isfinite(vals)):
            raise NumericalError("field contains non-finite samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_spectrum(cls, grid: GridSpec, coeffs: Array) -> "Field":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        f = cls(grid, np.fft.ifft(coeffs) * grid.num_modes)
        f.__dict__["spectrum"] = coeffs.copy()
        f.spectrum.setflags(write=False)
        return f

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.num_modes, dtype=np.complex128))

    @cached_property
    def spectrum(self) -> Array:
        c = np.fft.fft(self.values) / self.grid.num_modes
        c.setflags(write=False)
        return c

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise ConfigurationError("fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __mul__(self, other: Union[complex, float, "Field"]) -> "Field":
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))


def forward_transform(f: Field) -> Array:
    """Fourier coefficients of ``f`` (see module docstring for the convention)."""
    return f.spectrum


def inverse_transform(grid: GridSpec, coeffs: Array) -> Field:
    return Field.from_spectrum(grid, coeffs)


# --- symbols ---------------------------------------------------------------

def smoothstep5(t: Array) -> Array:
    """Quintic smoothstep ``6t^5 - 15t^4 + 10t^3`` clipped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def blended_power(xi: Array, N: float, power: float) -> Array:
    """Even symbol equal to 1 on |xi| <= N and (|xi|/N)**power on |xi| >= 2N.

    On N < |xi| < 2N the exponent is blended in log|xi|:

        symbol = (|xi|/N) ** (power * S(log2(|xi|/N)))

    with S the quintic smoothstep.  ``tau*S(tau)`` has matching value, slope
    and curvature with 0 at tau=0 and with tau at tau=1, so the log-symbol is
    C^2 in log|xi|, and it is monotone since ``d/dtau [tau*S(tau)] >= 0``.
    """
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.ones_like(a)
    hi = a > N
    r = a[hi] / N
    tau = np.log2(r)
    out[hi] = np.exp(power * np.log(r) * smoothstep5(tau))
    return out


@dataclass(frozen=True)
class MultiplierSpec:
    """A Fourier symbol, parameterized as in the constructors below."""

    kind: str
    s: float = 0.0
    N: float = 1.0
    table: Optional[Union[Array, Callable[[Array], Array]]] = field(default=None, compare=False)

    _KINDS = ("identity", "theta", "m", "derivative", "bracket_power", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigurationError(f"unknown multiplier kind {self.kind!r}")
        if self.kind in ("theta", "m"):
            if not (0.0 <= self.s < 1.0):
                raise ConfigurationError(f"s must lie in [0, 1), got {self.s}")
            if not self.N >= 1.0:
                raise ConfigurationError(f"N must be >= 1, got {self.N}")
        if self.kind == "custom" and self.table is None:
            raise ConfigurationError("custom multiplier needs a table or callable")

    @classmethod
    def identity(cls) -> "MultiplierSpec":
        return cls("identity")

    @classmethod
    def theta(cls, s: float, N: float) -> "MultiplierSpec":
        """Amplifying symbol of the D operator."""
        return cls("theta", s=s, N=N)

    @classmethod
    def m(cls, s: float, N: float) -> "MultiplierSpec":
        """Smoothing symbol of the I operator."""
        return cls("m", s=s, N=N)

    @classmethod
    def derivative(cls) -> "MultiplierSpec":
        return cls("derivative")

    @classmethod
    def bracket_power(cls, s: float) -> "MultiplierSpec":
        return cls("bracket_power", s=s)

    @classmethod
    def custom(cls, table) -> "MultiplierSpec":
        return cls("custom", table=table)

    def symbol(self, xi: Array) -> Array:
        xi = np.asarray(xi, dtype=float)
        if self.kind == "identity":
            return np.ones_like(xi)
        if self.kind == "theta":
            return blended_power(xi, self.N, self.s)
        if self.kind == "m":
            return blended_power(xi, self.N, self.s - 1.0)
        if self.kind == "derivative":
            return 1j * xi
        if self.kind == "bracket_power":
            return (1.0 + np.abs(xi)) ** self.s
        if callable(self.table):
            return np.asarray(self.table(xi))
        table = np.asarray(self.table)
        if table.shape != xi.shape:
            raise ConfigurationError("custom table does not match the frequency lattice")
        return table


def apply_multiplier(spec: MultiplierSpec, f: Field) -> Field:
    coeffs = spec.symbol(f.grid.xi) * f.spectrum
    coeffs[f.grid.nyquist_index] = 0.0
    return Field.from_spectrum(f.grid, coeffs)


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative; the Nyquist mode is dropped."""
    coeffs = (1j * f.grid.xi) ** order * f.spectrum
    coeffs[f.grid.nyquist_index] = 0.0
    return Field.from_spectrum(f.grid, coeffs)


# --- norms and inner products ---------------------------------------------

def bracket(xi: Array) -> Array:
    """Japanese bracket in the 1 + |xi| convention."""
    return 1.0 + np.abs(xi)


def hs_weights(grid: GridSpec, s: float) -> Array:
    return bracket(grid.xi) ** (2.0 * s)


def hs_norm(f: Field, s: float) -> float:
    w = hs_weights(f.grid, s)
    return float(np.sqrt(f.grid.box_length * np.sum(w * np.abs(f.spectrum) ** 2)))


def hs_inner(f: Field, g: Field, s: float = 0.0) -> float:
    """Real H^s inner product ``Re sum <xi>^{2s} f_hat conj(g_hat)``."""
    if f.grid != g.grid:
        raise ConfigurationError("fields live on different grids")
    w = hs_weights(f.grid, s)
    return float(f.grid.box_length * np.real(np.sum(w * f.spectrum * np.conj(g.spectrum))))


def inner(f: Field, g: Field) -> float:
    """Real L^2 pairing ``Re integral f conj(g)``, by physical quadrature."""
    if f.grid != g.grid:
        raise ConfigurationError("fields live on different grids")
    return float(np.real(np.sum(f.values * np.conj(g.values))) * f.grid.dx)


def lp_norm(f: Field, p: Union[int, float]) -> float:
    a = np.abs(f.values)
    if p == np.inf:
        return float(a.max())
    if p not in (2, 4, 6):
        raise ConfigurationError(f"lp_norm supports p in {{2, 4, 6, inf}}, got {p}")
    return float((np.sum(a**p) * f.grid.dx) ** (1.0 / p))
