"""Modulated decomposition ``u = e^{i theta} Q(. - x0) + w`` and modulation rates.

The parameters are fixed by the I-twisted orthogonality conditions

    r_A(theta, x0) = <u - Q_tilde, A I F(Q_tilde)> = 0,   A in {i, d/dx},

solved by damped Newton with an analytic Jacobian, starting from the
minimizer of ``d(u, Q_tilde) = ||I(u - Q_tilde)||_{H^1}`` over the cylinder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import difference_nonlinearity_G
from .ground_state import GroundStateParams, eval_Q, shift_spectrum, weighted_distance
from .spectral import (
    Field,
    MultiplierSpec,
    NumericalError,
    apply_multiplier,
    bracket,
    hs_norm,
)

log = logging.getLogger(__name__)


class DecompositionError(NumericalError):
    """Newton failed, or the input is outside the decomposition basin."""


class SingularSystemError(NumericalError):
    pass


@dataclass(frozen=True)
class ModulationFrame:
    params: GroundStateParams
    w: Field
    iw_h1: float
    ortho_residuals: Tuple[float, float]
    w_h1: float = 0.0
    iterations: int = 0
    rates: Optional[Tuple[float, float]] = None

    def q_tilde(self) -> Field:
        return _q_tilde(self.w.grid, self.params.theta, self.params.x0)


def _q_tilde(grid, theta, x0) -> Field:
    Q = eval_Q(grid)
    return Field.from_spectrum(grid, shift_spectrum(Q.spectrum, grid, x0) * np.exp(1j * theta))


def _pair(a: np.ndarray, b: np.ndarray, L: float) -> float:
    """Real L^2 pairing from Fourier coefficients."""
    return float(L * np.real(np.sum(a * np.conj(b))))


class _Residuals:
    """Orthogonality residuals and their Jacobian for one source field."""

    def __init__(self, u: Field, s: float, N: float):
        g = u.grid
        self.g = g
        self.L = g.box_length
        self.uc = u.spectrum
        self.mI = MultiplierSpec.m(s, N).symbol(g.xi)
        self.mI[g.nyquist_index] = 0.0
        Q = eval_Q(g)
        self.qc = Q.spectrum
        self.pc = Field(g, Q.values**3).spectrum
        self.ixi = 1j * g.xi
        self.A_sym = (1j * np.ones_like(g.xi), self.ixi)

    def evaluate(self, theta: float, x0: float):
        g, L = self.g, self.L
        rot = np.exp(1j * theta)
        qt = shift_spectrum(self.qc, g, x0) * rot
        ft = shift_spectrum(self.pc, g, x0) * rot
        wc = self.uc - qt
        wc[g.nyquist_index] = 0.0
        r = np.empty(2)
        J = np.empty((2, 2))
        for j, a in enumerate(self.A_sym):
            gA = a * self.mI * ft
            r[j] = _pair(wc, gA, L)
            # d/dtheta: Q~ -> iQ~, F(Q~) -> iF(Q~)
            J[j, 0] = _pair(-1j * qt, gA, L) + _pair(wc, 1j * gA, L)
            # d/dx0: Q~ -> -Q~_x, F(Q~) -> -F(Q~)_x
            J[j, 1] = _pair(self.ixi * qt, gA, L) + _pair(wc, -self.ixi * gA, L)
        return r, J, wc


def decompose(u: Field, s: float, N: float, *, tol: float = 1e-11, max_iter: int = 50,
              seed: Optional[GroundStateParams] = None, basin: float = 0.5) -> ModulationFrame:
    """Split ``u`` into a modulated ground state plus an orthogonal remainder.

    ``seed`` skips the d-metric scan and starts Newton from the given
    parameters (used when tracking along a trajectory).  ``basin`` bounds the
    d-distance to the cylinder relative to ``||I Q||_{H^1}``.
    """
    g = u.grid
    mI = MultiplierSpec.m(s, N).symbol(g.xi)
    weights = mI**2 * bracket(g.xi) ** 2
    q_scale = np.sqrt(g.box_length * np.sum(weights * np.abs(eval_Q(g).spectrum) ** 2))
    if seed is None:
        start = weighted_distance(u, weights)
        if start.distance > basin * q_scale:
            raise DecompositionError(
                f"input too far from the cylinder: d = {start.distance:.3g} "
                f"> {basin} * ||IQ||_H1 = {basin * q_scale:.3g}"
            )
        theta, x0 = start.params.theta, start.params.x0
    else:
        theta, x0 = seed.theta, seed.x0

    sys_ = _Residuals(u, s, N)
    r, J, wc = sys_.evaluate(theta, x0)
    rn = float(np.max(np.abs(r)))
    it = 0
    while rn > tol * max(1.0, _h1(wc, g)) and it < max_iter:
        it += 1
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(f"singular Newton Jacobian at iteration {it}") from exc
        lam = 1.0
        while True:
            r_new, J_new, wc_new = sys_.evaluate(theta + lam * delta[0], x0 + lam * delta[1])
            rn_new = float(np.max(np.abs(r_new)))
            if rn_new < rn or lam < 1e-6:
                break
            lam *= 0.5
        if rn_new >= rn:
            break
        theta, x0 = theta + lam * delta[0], x0 + lam * delta[1]
        r, J, wc, rn = r_new, J_new, wc_new, rn_new
    wn = _h1(wc, g)
    if rn > max(tol * max(1.0, wn), 1e-13):
        raise DecompositionError(
            f"Newton did not converge in {it} iterations: residuals {r[0]:.3e}, {r[1]:.3e}"
        )
    iw = float(np.sqrt(g.box_length * np.sum(weights * np.abs(wc) ** 2)))
    if iw > basin * q_scale:
        raise DecompositionError(
            f"remainder too large: ||I w||_H1 = {iw:.3g} > {basin} * ||IQ||_H1 = {basin * q_scale:.3g}"
        )
    w = Field.from_spectrum(g, wc)
    params = GroundStateParams(theta, x0).wrapped(g)
    return ModulationFrame(params, w, iw, (float(r[0]), float(r[1])), wn, it)


def _h1(wc: np.ndarray, g) -> float:
    return float(np.sqrt(g.box_length * np.sum(bracket(g.xi) ** 2 * np.abs(wc) ** 2)))


def comoving_remainder(frame: ModulationFrame) -> Field:
    """``e^{-i theta} w(. + x0)``, the remainder in the frame of the ground state."""
    g = frame.w.grid
    c = shift_spectrum(frame.w.spectrum, g, -frame.params.x0) * np.exp(-1j * frame.params.theta)
    return Field.from_spectrum(g, c)


def modulation_rates(frame: ModulationFrame, s: float, N: float, *,
                     max_condition: float = 1e6) -> Tuple[float, float]:
    """Rates ``(dtheta/dt, dx0/dt)`` implied by keeping the orthogonality conditions.

    ``theta`` here excludes the ``e^{it}`` rotation of the ground state, so a
    stationary soliton has zero rates.  With ``v`` the co-moving remainder and
    ``A_0 = I(iQ^3)``, ``A_1 = I d/dx(Q^3)`` the system is

        <i(Q+v), A_j> theta' - <(Q+v)_x, A_j> x0'
            = <i v_xx, A_j> - <i v, A_j> + <i G(v, Q), A_j>.
    """
    g = frame.w.grid
    L = g.box_length
    v = comoving_remainder(frame)
    Q = eval_Q(g)
    Ispec = MultiplierSpec.m(s, N)
    P = Field(g, Q.values**3)
    A = [apply_multiplier(Ispec, 1j * P).spectrum,
         apply_multiplier(Ispec, P).spectrum * (1j * g.xi)]
    qv = Q.spectrum + v.spectrum
    vc = v.spectrum
    Gc = difference_nonlinearity_G(v, Q).spectrum
    xi = g.xi
    M = np.empty((2, 2))
    rhs = np.empty(2)
    for j, a in enumerate(A):
        M[j, 0] = _pair(1j * qv, a, L)
        M[j, 1] = -_pair(1j * xi * qv, a, L)
        rhs[j] = (_pair(-1j * xi**2 * vc, a, L) - _pair(1j * vc, a, L)
                  + _pair(1j * Gc, a, L))
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularSystemError(f"modulation system is ill-conditioned (cond = {cond:.3g})")
    sol = np.linalg.solve(M, rhs)
    return float(sol[0]), float(sol[1])


@dataclass
class ModulationTrack:
    times: np.ndarray
    frames: List[ModulationFrame]
    theta: np.ndarray  # unwrapped, e^{it} rotation removed
    x0: np.ndarray  # unwrapped across the periodic box
    theta_rate: np.ndarray
    x0_rate: np.ndarray
    failed_at: Optional[float] = None

    def finite_difference_rates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Centered differences of the tracked parameters (one-sided at the ends)."""
        if self.times.size < 2:
            return np.zeros_like(self.theta), np.zeros_like(self.x0)
        return np.gradient(self.theta, self.times), np.gradient(self.x0, self.times)


def track_modulation(fields: Sequence[Field], times: Sequence[float], s: float, N: float,
                     *, tol: float = 1e-11) -> ModulationTrack:
    """Decompose every snapshot, seeding each Newton solve with the previous frame.

    A basin exit stops the track; the failing time is reported in ``failed_at``.
    """
    times = np.asarray(times, dtype=float)
    frames: List[ModulationFrame] = []
    thetas: List[float] = []
    x0s: List[float] = []
    failed = None
    for t, u in zip(times, fields):
        prev = frames[-1].params if frames else None
        try:
            fr = decompose(u, s, N, tol=tol, seed=prev)
        except DecompositionError as exc:
            if prev is None:
                raise
            try:
                fr = decompose(u, s, N, tol=tol)
            except DecompositionError:
                log.warning("decomposition left its basin at t=%g: %s", t, exc)
                failed = float(t)
                break
        rates = modulation_rates(fr, s, N)
        fr = replace(fr, rates=rates)
        th = fr.params.theta - t
        x0 = fr.params.x0
        if not thetas:
            th = (th + np.pi) % (2 * np.pi) - np.pi
        else:
            th += 2 * np.pi * np.round((thetas[-1] - th) / (2 * np.pi))
            Lb = u.grid.box_length
            x0 += Lb * np.round((x0s[-1] - x0) / Lb)
        frames.append(fr)
        thetas.append(th)
        x0s.append(x0)
    n = len(frames)
    rates = np.array([f.rates for f in frames]).reshape(n, 2)
    return ModulationTrack(times[:n], frames, np.array(thetas), np.array(x0s),
                           rates[:, 0], rates[:, 1], failed)
