"""Cubic NLS time stepping, closed-form solutions and conserved functionals.

The equation is ``i u_t + u_xx = -sigma |u|^2 u`` with ``sigma = +1``
(focusing) or ``-1`` (defocusing).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .spectral import (
    ConfigurationError,
    Field,
    GridSpec,
    MultiplierSpec,
    NumericalError,
    apply_multiplier,
    bracket,
    derivative,
    hs_norm,
)

SIGNS = {"focusing": 1.0, "defocusing": -1.0}

LEDGER_COLUMNS = (
    "t", "mass", "H", "L", "E_D", "E_I", "hs_norm", "dist_hs",
    "theta", "x0", "iw_h1", "res0", "res1",
)
# modulation columns may be NaN after the decomposition leaves its basin
GAPPED_COLUMNS = frozenset({"theta", "x0", "iw_h1", "res0", "res1"})


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float = 0.0
    sign: str = "focusing"
    dealias: bool = False
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}")
        if self.sign not in SIGNS:
            raise ConfigurationError(f"sign must be one of {sorted(SIGNS)}, got {self.sign!r}")
        if int(self.record_stride) < 1:
            raise ConfigurationError("record_stride must be a positive integer")

    @property
    def sigma(self) -> float:
        return SIGNS[self.sign]

    @property
    def num_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_resolution(self, grid: GridSpec) -> None:
        if self.dt * grid.xi_max**2 >= np.pi:
            raise ConfigurationError(
                f"dt={self.dt} under-resolves the kinetic phase: dt*xi_max^2 = "
                f"{self.dt * grid.xi_max**2:.3g} >= pi"
            )


# --- nonlinearity ----------------------------------------------------------

def _pad(coeffs: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad FFT-ordered coefficients to ``size`` modes (Nyquist dropped)."""
    M = coeffs.size
    h = M // 2
    out = np.zeros(size, dtype=np.complex128)
    out[:h] = coeffs[:h]
    out[size - h + 1:] = coeffs[h + 1:]
    return out


def _truncate(coeffs: np.ndarray, size: int) -> np.ndarray:
    h = size // 2
    out = np.zeros(size, dtype=np.complex128)
    out[:h] = coeffs[:h]
    out[h + 1:] = coeffs[coeffs.size - h + 1:]
    return out


def _cubic_dealiased(values: np.ndarray) -> np.ndarray:
    # 2x padding is alias-free for a cubic product restricted to the base band
    M = values.size
    c = np.fft.fft(values) / M
    P = 2 * M
    up = np.fft.ifft(_pad(c, P)) * P
    prod = np.abs(up) ** 2 * up
    return np.fft.ifft(_truncate(np.fft.fft(prod) / P, M)) * M


def nonlinearity_F(u: Field, dealias: bool = False) -> Field:
    """Pointwise ``|u|^2 u``; with ``dealias`` the product is computed alias-free."""
    if dealias:
        return Field(u.grid, _cubic_dealiased(u.values))
    v = u.values
    return Field(u.grid, np.abs(v) ** 2 * v)


def difference_nonlinearity_G(w: Field, Qf: Field, dealias: bool = False) -> Field:
    """``F(Q + w) - F(Q)``, expanded so that it vanishes exactly at ``w = 0``."""
    if w.grid != Qf.grid:
        raise ConfigurationError("w and Q live on different grids")
    if dealias:
        return Field(w.grid, _cubic_dealiased(Qf.values + w.values) - _cubic_dealiased(Qf.values))
    q, a = Qf.values, w.values
    # |q+a|^2 (q+a) - |q|^2 q, grouped by degree in a
    aq = a * np.conj(q)
    val = (
        2.0 * np.real(aq) * q + np.abs(q) ** 2 * a
        + 2.0 * np.real(aq) * a + np.abs(a) ** 2 * q
        + np.abs(a) ** 2 * a
    )
    return Field(w.grid, val)


# --- integrator ------------------------------------------------------------

def _nonlinear_phase(values: np.ndarray, tau: float, sigma: float, dealias: bool) -> np.ndarray:
    if not dealias:
        return values * np.exp(1j * sigma * tau * np.abs(values) ** 2)
    M = values.size
    P = 2 * M
    c = np.fft.fft(values) / M
    up = np.fft.ifft(_pad(c, P)) * P
    up = up * np.exp(1j * sigma * tau * np.abs(up) ** 2)
    return np.fft.ifft(_truncate(np.fft.fft(up) / P, M)) * M


def _check_finite(values: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise NumericalError(f"non-finite field at t={t:.6g} ({bad} bad samples)")


def _strang(values: np.ndarray, grid: GridSpec, dt: float, nsteps: int,
            sigma: float, dealias: bool) -> np.ndarray:
    """``nsteps`` Strang steps with adjacent half kinetic steps fused."""
    if nsteps == 0:
        return values
    xi2 = grid.xi**2
    half = np.exp(-0.5j * xi2 * dt)
    full = half * half
    c = np.fft.fft(values) * half
    # overflow shows up as non-finite samples, which the caller reports
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(nsteps):
            v = np.fft.ifft(c)
            v = _nonlinear_phase(v, dt, sigma, dealias)
            c = np.fft.fft(v) * (full if n < nsteps - 1 else half)
        return np.fft.ifft(c)


def step(u: Field, cfg: SolverConfig, dt: Optional[float] = None) -> Field:
    """One Strang step: half kinetic, full nonlinear phase, half kinetic.

    ``dt`` overrides ``cfg.dt`` (negative values step backwards).
    """
    h = cfg.dt if dt is None else dt
    vals = _strang(u.values, u.grid, h, 1, cfg.sigma, cfg.dealias)
    _check_finite(vals, h)
    return Field(u.grid, vals)


# --- functionals -----------------------------------------------------------

def mass(u: Field) -> float:
    return float(u.grid.box_length * np.sum(np.abs(u.spectrum) ** 2))


def hamiltonian(u: Field, sign: str = "focusing") -> float:
    """``integral |u_x|^2/2 - sigma |u|^4/4``; the conserved energy of the flow with ``sign``."""
    if sign not in SIGNS:
        raise ConfigurationError(f"sign must be one of {sorted(SIGNS)}, got {sign!r}")
    g = u.grid
    kinetic = g.box_length * np.sum(g.xi**2 * np.abs(u.spectrum) ** 2)
    return float(0.5 * kinetic - 0.25 * SIGNS[sign] * quartic_integral(u))


def quartic_integral(u: Field) -> float:
    """``integral |u|^4`` of the trigonometric interpolant, exactly.

    ``|u|^4`` has modes up to 2M - 4, so rectangle quadrature on 2M points
    is exact; on the base grid it would alias for rough data.
    """
    M = u.grid.num_modes
    P = 2 * M
    up = np.fft.ifft(_pad(np.asarray(u.spectrum), P)) * P
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(np.abs(up) ** 4) * u.grid.box_length / P)


def lyapunov(u: Field) -> float:
    return 2.0 * hamiltonian(u) + mass(u)


def modified_energy_D(u: Field, s: float, N: float) -> float:
    """``||D u||_2^2`` with the amplifying theta(s, N) symbol."""
    Du = apply_multiplier(MultiplierSpec.theta(s, N), u)
    return mass(Du)


def modified_energy_I(u: Field, s: float, N: float) -> float:
    """``L(I u)`` with the smoothing m(s, N) symbol."""
    return lyapunov(apply_multiplier(MultiplierSpec.m(s, N), u))


def modified_energy_refined(Q_tilde: Field, w: Field, s: float, N: float) -> float:
    """``L(Q_tilde + I w)`` where ``Q_tilde`` is the modulated ground state."""
    return lyapunov(Q_tilde + apply_multiplier(MultiplierSpec.m(s, N), w))


# --- closed-form solutions and data ----------------------------------------

def exact_solution(grid: GridSpec, kind: str, t: float, *, eps: float = 0.0,
                   amplitude: complex = 1.0, k: int = 0) -> Field:
    """Sampled closed-form solution of the focusing equation at time ``t``.

    kind: ``"soliton"`` (e^{it} Q), ``"galilean"`` (boosted soliton with
    velocity 2*eps) or ``"plane_wave"`` (A e^{i xi_k x}, ``k`` an integer
    lattice index).
    """
    from .ground_state import ground_state_profile

    x = grid.x
    if kind == "soliton":
        return Field(grid, np.exp(1j * t) * ground_state_profile(x))
    if kind == "galilean":
        y = x - 2.0 * eps * t
        y = (y + 0.5 * grid.box_length) % grid.box_length - 0.5 * grid.box_length
        return Field(grid, np.exp(1j * (eps * x - eps**2 * t + t)) * ground_state_profile(y))
    if kind == "plane_wave":
        if int(k) != k or abs(k) >= grid.num_modes // 2:
            raise ConfigurationError(f"plane-wave index {k} is not a resolved lattice mode")
        xi = 2.0 * np.pi * k / grid.box_length
        A = complex(amplitude)
        return Field(grid, A * np.exp(1j * (xi * (x - x[0]) + (-xi**2 + abs(A) ** 2) * t)))
    raise ConfigurationError(f"unknown exact solution {kind!r}")


def rough_data(grid: GridSpec, s: float, seed: int, *, norm: float = 1.0,
               excess: float = 0.01, kmax: Optional[int] = None) -> Field:
    """Random field with ``|u_hat| ~ <xi>^{-s-1/2-excess}`` times complex Gaussians.

    Normalized so that ``hs_norm(u, s) == norm``; modes with ``|k| > kmax``
    and the Nyquist mode are zero.
    """
    rng = np.random.default_rng(seed)
    M = grid.num_modes
    z = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    c = z * bracket(grid.xi) ** (-s - 0.5 - excess)
    c[grid.nyquist_index] = 0.0
    if kmax is not None:
        c[np.abs(grid.k) > kmax] = 0.0
    u = Field.from_spectrum(grid, c)
    return Field.from_spectrum(grid, c * (norm / hs_norm(u, s)))


# --- trajectories ----------------------------------------------------------

@dataclass
class EnergyLedger:
    """Time series of scalar diagnostics along one trajectory."""

    times: np.ndarray
    columns: Dict[str, np.ndarray]
    fields: Optional[List[Field]] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise NumericalError("ledger times must be strictly increasing")
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=float)
            if col.shape != self.times.shape:
                raise NumericalError(f"ledger column {name!r} has the wrong length")
            bad = ~np.isfinite(col)
            if name in GAPPED_COLUMNS:
                bad &= ~np.isnan(col)
            if np.any(bad):
                raise NumericalError(f"ledger column {name!r} contains non-finite values")
            self.columns[name] = col

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.times
        return self.columns[name]

    def to_csv(self, columns: Sequence[str] = LEDGER_COLUMNS) -> str:
        """CSV text; unrecorded columns and modulation gaps are left empty."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for i, t in enumerate(self.times):
            row = []
            for name in columns:
                if name == "t":
                    row.append(format_float(t))
                elif name in self.columns and not np.isnan(self.columns[name][i]):
                    row.append(format_float(self.columns[name][i]))
                else:
                    row.append("")
            w.writerow(row)
        return buf.getvalue()


def format_float(x: float) -> str:
    return repr(float(x))


Probe = Callable[[Field], float]


def standard_probes(s: float, N: Optional[float] = None) -> Dict[str, Probe]:
    probes: Dict[str, Probe] = {
        "mass": mass,
        "H": hamiltonian,
        "L": lyapunov,
        "hs_norm": lambda u: hs_norm(u, s),
    }
    if N is not None:
        probes["E_D"] = lambda u: modified_energy_D(u, s, N)
        probes["E_I"] = lambda u: modified_energy_I(u, s, N)
    return probes


def evolve(u0: Field, cfg: SolverConfig, probes: Mapping[str, Probe],
           *, keep_fields: bool = False) -> EnergyLedger:
    """Integrate to ``cfg.t_end`` and evaluate ``probes`` every ``record_stride`` steps.

    The final time is always recorded.
    """
    stride = int(cfg.record_stride)
    nsteps = cfg.num_steps
    grid = u0.grid
    record_steps = list(range(0, nsteps + 1, stride))
    if record_steps[-1] != nsteps:
        record_steps.append(nsteps)

    times: List[float] = []
    cols: Dict[str, List[float]] = {name: [] for name in probes}
    kept: List[Field] = []
    vals = u0.values
    done = 0
    for n in record_steps:
        vals = _strang(vals, grid, cfg.dt, n - done, cfg.sigma, cfg.dealias)
        done = n
        t = n * cfg.dt
        _check_finite(vals, t)
        u = Field(grid, vals)
        times.append(t)
        for name, fn in probes.items():
            cols[name].append(fn(u))
        if keep_fields:
            kept.append(u)
    return EnergyLedger(np.array(times), {k: np.array(v) for k, v in cols.items()},
                        kept if keep_fields else None)
