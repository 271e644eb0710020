"""The ground state Q, its symmetry cylinder, distances to it and coercivity probes.

Q is the positive even solution of ``Q'' + Q^3 = Q``, namely
``Q(x) = sqrt(2) sech(x)``.  The cylinder is the orbit
``{exp(i*theta) Q(. - x0)}`` under phase rotation and translation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dynamics import lyapunov, mass
from .spectral import (
    ConfigurationError,
    Field,
    GridSpec,
    bracket,
    derivative,
    hs_norm,
    inner,
)

Q_AMPLITUDE = np.sqrt(2.0)


class RejectedInput(ValueError):
    """Input violates the admissibility conditions of a probe."""


def ground_state_profile(x: np.ndarray) -> np.ndarray:
    return Q_AMPLITUDE / np.cosh(x)


@dataclass(frozen=True)
class GroundStateParams:
    """Phase (radians, wrapped to [0, 2pi)) and center of a cylinder element."""

    theta: float = 0.0
    x0: float = 0.0

    def wrapped(self, grid: GridSpec) -> "GroundStateParams":
        L = grid.box_length
        return GroundStateParams(float(self.theta % (2.0 * np.pi)),
                                 float((self.x0 + 0.5 * L) % L - 0.5 * L))


def eval_Q(grid: GridSpec) -> Field:
    edge = ground_state_profile(np.array([0.5 * grid.box_length]))[0]
    if edge >= 1e-14:
        raise ConfigurationError(
            f"box_length={grid.box_length} too small: Q(box/2) = {edge:.2e} >= 1e-14"
        )
    return Field(grid, ground_state_profile(grid.x).astype(np.complex128))


def shift_spectrum(coeffs: np.ndarray, grid: GridSpec, x0: float) -> np.ndarray:
    """Coefficients of ``f(. - x0)``; exact for band-limited content."""
    out = coeffs * np.exp(-1j * grid.xi * x0)
    out[grid.nyquist_index] = 0.0
    return out


def sample_sigma(p: GroundStateParams, grid: GridSpec) -> Field:
    Q = eval_Q(grid)
    c = shift_spectrum(Q.spectrum, grid, p.x0) * np.exp(1j * p.theta)
    return Field.from_spectrum(grid, c)


def ground_state_residual(f: Field) -> float:
    """``||f_xx + |f|^2 f - f||_2`` with spectral derivatives."""
    r = derivative(f, 2).values + np.abs(f.values) ** 2 * f.values - f.values
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * f.grid.dx))


# --- distance to the cylinder ------------------------------------------------

@dataclass(frozen=True)
class DistanceResult:
    distance: float
    params: GroundStateParams
    boundary_hit: bool = False


def golden_section_max(f, a: float, b: float, xtol: float = 1e-10) -> float:
    """Maximizer of a unimodal ``f`` on [a, b] to absolute tolerance ``xtol``."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xtol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _best_translate(u: Field, target_coeffs: np.ndarray, weights: np.ndarray,
                    xtol: float = 1e-10, seed_x0: Optional[float] = None):
    """Maximize ``|c(x0)|`` with ``c(x0) = L sum_k w_k u_k conj(t_k) e^{i xi_k x0}``.

    Returns (x0, c(x0)).  The coarse scan over grid translates is one inverse
    FFT; the maximum is then refined by golden-section search.
    """
    g = u.grid
    prod = weights * u.spectrum * np.conj(target_coeffs)
    prod[g.nyquist_index] = 0.0
    # c at lattice translates x0 = j*dx: sum_k prod_k exp(2 pi i j k / M)
    scan = np.fft.ifft(prod) * g.num_modes * g.box_length
    if seed_x0 is None:
        j = int(np.argmax(np.abs(scan)))
        x_c = j * g.dx if j < g.num_modes // 2 else (j - g.num_modes) * g.dx
    else:
        x_c = float(seed_x0)

    xi = g.xi

    def c_at(x0: float) -> complex:
        return complex(g.box_length * np.sum(prod * np.exp(1j * xi * x0)))

    x_best = golden_section_max(lambda x0: abs(c_at(x0)), x_c - g.dx, x_c + g.dx, xtol)
    # golden section resolves the flat maximum only to ~sqrt(eps); polish with
    # Newton on d|c|^2/dx0 = 2 Re(conj(c) c')
    for _ in range(8):
        e = prod * np.exp(1j * xi * x_best)
        c = np.sum(e)
        c1 = np.sum(1j * xi * e)
        c2 = np.sum(-(xi**2) * e)
        f1 = np.real(np.conj(c) * c1)
        f2 = np.real(np.conj(c1) * c1 + np.conj(c) * c2)
        if f2 >= 0:
            break
        dx_newton = -f1 / f2
        if abs(dx_newton) > g.dx:
            break
        x_best += dx_newton
        if abs(dx_newton) < 1e-15 * max(1.0, abs(x_best)):
            break
    return x_best, c_at(x_best)


def weighted_distance(u: Field, weights: np.ndarray, *, seed_x0: Optional[float] = None) -> DistanceResult:
    """Distance from ``u`` to the cylinder in the norm ``sqrt(L sum w |f_k|^2)``."""
    g = u.grid
    Q = eval_Q(g)
    qc = Q.spectrum
    x0, c = _best_translate(u, qc, weights, seed_x0=seed_x0)
    theta = float(np.angle(c)) if abs(c) > 0 else 0.0
    # evaluate the residual directly; |u|^2 + |Q|^2 - 2|c| cancels to ~sqrt(eps)
    diff = u.spectrum - shift_spectrum(qc, g, x0) * np.exp(1j * theta)
    diff[g.nyquist_index] = 0.0
    d = float(np.sqrt(g.box_length * np.sum(weights * np.abs(diff) ** 2)))
    params = GroundStateParams(theta, x0).wrapped(g)
    hit = abs(x0) >= 0.5 * g.box_length - g.dx
    return DistanceResult(d, params, bool(hit))


def dist_hs(u: Field, s: float, *, seed_x0: Optional[float] = None) -> DistanceResult:
    """``min over (theta, x0) of ||u - e^{i theta} Q(. - x0)||_{H^s}``."""
    w = bracket(u.grid.xi) ** (2.0 * s)
    return weighted_distance(u, w, seed_x0=seed_x0)


# --- coercivity --------------------------------------------------------------

def coercivity_probe(w: Field, *, ortho_tol: float = 1e-10, require_mass: bool = True,
                     mass_tol: float = 1e-10) -> float:
    """``(L(Q + w) - L(Q)) / ||w||_{H^1}^2`` for admissible ``w``.

    Admissible means ``<w, iF(Q)> = <w, d/dx F(Q)> = 0`` (within ``ortho_tol``
    relative to the H^1 norms) and, when ``require_mass``, ``||Q+w||_2 = ||Q||_2``.
    """
    g = w.grid
    Q = eval_Q(g)
    wn = hs_norm(w, 1.0)
    if wn == 0.0:
        raise RejectedInput("w = 0: ratio undefined")
    FQ = Field(g, Q.values**3)
    for A in (1j * FQ, derivative(FQ)):
        if abs(inner(w, A)) > ortho_tol * wn * hs_norm(A, 1.0):
            raise RejectedInput("w is not orthogonal to the symmetry directions")
    u = Q + w
    if require_mass and abs(mass(u) - mass(Q)) > mass_tol * mass(Q):
        raise RejectedInput("Q + w is off the mass sphere of Q")
    return (lyapunov(u) - lyapunov(Q)) / wn**2


def project_admissible(w: Field, *, on_sphere: bool = True) -> Field:
    """Project out the symmetry directions, then rescale ``Q + w`` onto the mass sphere.

    The rescaling keeps both orthogonality conditions since ``<Q, iQ^3>`` and
    ``<Q, (Q^3)_x>`` vanish.
    """
    g = w.grid
    Q = eval_Q(g)
    FQ = Field(g, Q.values**3)
    A = [1j * FQ, derivative(FQ)]
    gram = np.array([[inner(a, b) for b in A] for a in A])
    rhs = np.array([inner(w, a) for a in A])
    coef = np.linalg.solve(gram, rhs)
    w = w - coef[0] * A[0] - coef[1] * A[1]
    if on_sphere:
        u = Q + w
        u = u * np.sqrt(mass(Q) / mass(u))
        w = u - Q
    return w
