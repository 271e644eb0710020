"""Multilinear forms on the frequency hyperplane and the symbol identities behind
the almost-conservation estimates.

Normalization: for fields ``f_1..f_n`` with Fourier coefficients ``c_j`` (see
:mod:`nlslab.spectral`),

    Lambda_n(M; f_1, ..., f_n) = L * sum_{k_1+...+k_n = 0} M(xi_{k_1}, ..., xi_{k_n})
                                 * c_1(k_1) ... c_n(k_n),

with the sum over the exact (non-periodized) integer hyperplane.  For
``M == 1`` this equals the quadrature of ``f_1 ... f_n`` whenever the product
is resolved on the grid.  A conjugated slot ``conj(u)`` has coefficients
``conj(c(-k))``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import SolverConfig, modified_energy_D, nonlinearity_F, step
from .spectral import (
    ConfigurationError,
    Field,
    GridSpec,
    MultiplierSpec,
    blended_power,
)


class HyperplaneError(ValueError):
    """Frequency tuple does not sum to zero."""


class CostGuardError(RuntimeError):
    pass


# --- symbols -----------------------------------------------------------------

def _theta(xi, s, N):
    return blended_power(xi, N, s)


def _m(xi, s, N):
    return blended_power(xi, N, s - 1.0)


@dataclass(frozen=True)
class SymbolM:
    """One of the symbols M4, M4', M4'', M6, parameterized by (s, N)."""

    variant: str
    s: float
    N: float

    _ARITY = {"M4": 4, "M4_prime": 4, "M4_double_prime": 4, "M6": 6}

    def __post_init__(self):
        if self.variant not in self._ARITY:
            raise ConfigurationError(f"unknown symbol {self.variant!r}")
        if not (0.0 <= self.s < 1.0) or not self.N >= 1.0:
            raise ConfigurationError("symbol needs s in [0, 1) and N >= 1")

    @property
    def arity(self) -> int:
        return self._ARITY[self.variant]

    def __call__(self, *xis):
        """Evaluate on arrays of frequencies (no hyperplane check)."""
        s, N = self.s, self.N
        if self.variant == "M4":
            x1, x2, x3, x4 = xis
            return (_theta(x1, s, N) ** 2 - _theta(x2, s, N) ** 2
                    + _theta(x3, s, N) ** 2 - _theta(x4, s, N) ** 2)
        if self.variant == "M4_double_prime":
            x1, x2, x3, x4 = xis
            return _m(x1, s, N) ** 2 - _m(x2, s, N) ** 2 + _m(x3, s, N) ** 2 - _m(x4, s, N) ** 2
        if self.variant == "M4_prime":
            x1, x2, x3, x4 = xis
            return (np.asarray(x1) ** 2 * _m(x1, s, N)
                    * (_m(x2, s, N) * _m(x3, s, N) * _m(x4, s, N) - _m(np.add(np.add(x2, x3), x4), s, N)))
        x1, x2, x3, x4, x5, x6 = xis
        return (_m(np.add(np.add(x1, x2), x3), s, N) * _m(x4, s, N) * _m(x5, s, N) * _m(x6, s, N)
                - _m(x1, s, N) * _m(x2, s, N) * _m(x3, s, N) * _m(np.add(np.add(x4, x5), x6), s, N))


def _check_hyperplane(xis: Sequence[float], rtol: float = 1e-12) -> None:
    total = float(np.sum(xis))
    scale = max(1.0, float(np.max(np.abs(xis))))
    if abs(total) > rtol * scale:
        raise HyperplaneError(f"frequencies sum to {total:.3g}, not 0")


def eval_symbol(sym: SymbolM, xis: Sequence[float]) -> float:
    if len(xis) != sym.arity:
        raise ConfigurationError(f"{sym.variant} takes {sym.arity} frequencies")
    _check_hyperplane(xis)
    return float(sym(*[float(x) for x in xis]))


def factorization_check(xis: Sequence[float]) -> Tuple[float, float]:
    """Both sides of ``x1^2 - x2^2 + x3^2 - x4^2 = 2 (x1 + x4)(x1 + x2)``."""
    if len(xis) != 4:
        raise ConfigurationError("factorization identity takes 4 frequencies")
    _check_hyperplane(xis)
    x1, x2, x3, x4 = (float(x) for x in xis)
    return x1 * x1 - x2 * x2 + x3 * x3 - x4 * x4, 2.0 * (x1 + x4) * (x1 + x2)


# --- Lambda_n ----------------------------------------------------------------

def slot_coefficients(f: Field, conjugate: bool) -> np.ndarray:
    """Coefficients of ``f`` or ``conj(f)`` in FFT order (Nyquist dropped)."""
    c = np.array(f.spectrum)
    if conjugate:
        c = np.conj(np.roll(c[::-1], 1))
    c[f.grid.nyquist_index] = 0.0
    return c


def _pad_to(c: np.ndarray, P: int) -> np.ndarray:
    M = c.size
    h = M // 2
    out = np.zeros(P, dtype=np.complex128)
    out[:h] = c[:h]
    out[P - h + 1:] = c[h + 1:]
    return out


def _conv_spectrum(cs: Sequence[np.ndarray], P: int) -> np.ndarray:
    """Exact linear convolution of coefficient arrays, in FFT order of size P."""
    prod = np.ones(P, dtype=np.complex128)
    for c in cs:
        prod *= np.fft.ifft(_pad_to(c, P)) * P
    return np.fft.fft(prod) / P


def _pair_exact(A: np.ndarray, B: np.ndarray, weight: Optional[np.ndarray] = None) -> complex:
    """``sum_K weight(K) A(K) B(-K)`` for FFT-ordered arrays of equal size P."""
    Bm = np.roll(B[::-1], 1)
    if weight is None:
        return complex(np.sum(A * Bm))
    return complex(np.sum(weight * A * Bm))


def _separable(grid: GridSpec, cs: Sequence[np.ndarray], factors: Sequence[Optional[np.ndarray]]) -> complex:
    """``L * sum_hyperplane prod_j factor_j(k_j) c_j(k_j)`` via one padded product."""
    n = len(cs)
    P = _padded_size(grid.num_modes, n)
    prod = np.ones(P, dtype=np.complex128)
    for c, fac in zip(cs, factors):
        cc = c if fac is None else c * fac
        prod *= np.fft.ifft(_pad_to(cc, P)) * P
    # the k = 0 coefficient of the product is the hyperplane sum
    return complex(grid.box_length * np.sum(prod) / P)


def _padded_size(M: int, n: int) -> int:
    # n slots with |k| < M/2: sums lie in (-nM/2, nM/2), so P >= nM/2 + 1 avoids wrap
    P = M
    while P < n * M // 2 + 1:
        P *= 2
    return P


def _symbol_terms(sym: SymbolM, xi: np.ndarray):
    """Decompose a symbol into separable products of single-slot factors.

    Returns a list of (coefficient, [factor per slot]) or None when the symbol
    is not separable (M6 needs a dedicated path).
    """
    s, N = sym.s, sym.N
    if sym.variant == "M4":
        t2 = _theta(xi, s, N) ** 2
        return [(1.0, [t2, None, None, None]), (-1.0, [None, t2, None, None]),
                (1.0, [None, None, t2, None]), (-1.0, [None, None, None, t2])]
    if sym.variant == "M4_double_prime":
        m2 = _m(xi, s, N) ** 2
        return [(1.0, [m2, None, None, None]), (-1.0, [None, m2, None, None]),
                (1.0, [None, None, m2, None]), (-1.0, [None, None, None, m2])]
    if sym.variant == "M4_prime":
        m = _m(xi, s, N)
        # m(x2+x3+x4) = m(-x1) = m(x1) on the hyperplane
        return [(1.0, [xi**2 * m, m, m, m]), (-1.0, [xi**2 * m * m, None, None, None])]
    return None


def eval_lambda_n(sym, fields: Sequence[Field], conjugate: Optional[Sequence[bool]] = None,
                  *, method: str = "auto", allow_expensive: bool = False) -> complex:
    """Evaluate ``Lambda_n(sym; f_1, ..., f_n)``.

    ``sym`` is a :class:`SymbolM`, the constant 1 (``None`` or ``1``) or a
    callable of n frequency arrays.  ``conjugate`` defaults to the alternating
    pattern (u, conj u, u, conj u, ...).  ``method="direct"`` enumerates the
    hyperplane (cost M^(n-1)); ``"fft"`` uses padded products and is only
    available for the built-in symbols.
    """
    n = len(fields)
    if n not in (2, 4, 6):
        raise ConfigurationError("Lambda_n is implemented for n in {2, 4, 6}")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ConfigurationError("fields live on different grids")
    if conjugate is None:
        conjugate = [bool(j % 2) for j in range(n)]
    cs = [slot_coefficients(f, c) for f, c in zip(fields, conjugate)]
    xi = grid.xi.copy()
    xi[grid.nyquist_index] = 0.0
    const = sym is None or (not callable(sym) and np.isscalar(sym))
    if isinstance(sym, SymbolM) and sym.arity != n:
        raise ConfigurationError(f"{sym.variant} has arity {sym.arity}, got {n} fields")

    if method == "auto":
        method = "fft" if (const or isinstance(sym, SymbolM)) else "direct"
    if method == "fft":
        if const:
            scale = 1.0 if sym is None else complex(sym)
            return scale * _separable(grid, cs, [None] * n)
        if not isinstance(sym, SymbolM):
            raise ConfigurationError("fft evaluation needs a built-in symbol")
        terms = _symbol_terms(sym, xi)
        if terms is not None:
            return sum(coef * _separable(grid, cs, facs) for coef, facs in terms)
        return _lambda6_fft(grid, cs, sym, xi)
    if method != "direct":
        raise ConfigurationError(f"unknown method {method!r}")
    return _lambda_direct(grid, cs, sym, allow_expensive)


def _lambda6_fft(grid: GridSpec, cs, sym: SymbolM, xi) -> complex:
    M = grid.num_modes
    P = _padded_size(M, 6)
    m = _m(xi, sym.s, sym.N)
    # first term: m(K) [c1 c2 c3](K) [m c4 m c5 m c6](-K), K = k1+k2+k3
    A = _conv_spectrum(cs[:3], P)
    B = _conv_spectrum([cs[3] * m, cs[4] * m, cs[5] * m], P)
    K = np.fft.fftfreq(P, d=1.0 / P) * grid.dxi
    mK = _m(K, sym.s, sym.N)
    first = _pair_exact(A, B, mK)
    A2 = _conv_spectrum([cs[0] * m, cs[1] * m, cs[2] * m], P)
    B2 = _conv_spectrum(cs[3:], P)
    second = np.sum(A2 * np.roll(B2[::-1], 1) * mK)
    return complex(grid.box_length * (first - second))


def _lambda_direct(grid: GridSpec, cs, sym, allow_expensive: bool) -> complex:
    n = len(cs)
    M = grid.num_modes
    if n == 6 and M > 256 and not allow_expensive:
        raise CostGuardError("direct Lambda_6 with M > 256 needs allow_expensive=True")
    if M ** (n - 1) > 2 * 10**8 and not allow_expensive:
        raise CostGuardError(f"direct Lambda_{n} would visit {M ** (n - 1):.3g} tuples")
    h = M // 2
    ks = np.arange(-h + 1, h)  # Nyquist excluded
    dxi = grid.dxi
    fn = (lambda *x: np.ones(np.broadcast(*x).shape)) if (sym is None or np.isscalar(sym)) else sym
    scale = 1.0 if sym is None or not np.isscalar(sym) else complex(sym)

    def coeff(c, k):
        return c[np.mod(k, M)]

    total = 0.0 + 0.0j
    grids = np.meshgrid(*([ks] * (n - 2)), indexing="ij")
    rest = [g_.ravel() for g_ in grids]
    base = np.ones(rest[0].size, dtype=np.complex128)
    for j, kj in enumerate(rest, start=1):
        base = base * coeff(cs[j], kj)
    partial = np.sum(rest, axis=0)
    for k1 in ks:
        kn = -(k1 + partial)
        ok = np.abs(kn) < h
        if not np.any(ok):
            continue
        tup = [np.full(ok.sum(), k1)] + [r[ok] for r in rest] + [kn[ok]]
        vals = fn(*[t * dxi for t in tup])
        total += coeff(cs[0], k1) * np.sum(vals * base[ok] * coeff(cs[-1], kn[ok]))
    return complex(scale * grid.box_length * total)


# --- energy derivative identity ---------------------------------------------

def energy_derivative_check(u: Field, s: float, N: float, dt: float, *,
                            sign: str = "focusing", dealias: bool = True) -> Tuple[float, float, float]:
    """Compare ``dE_D/dt`` along the flow with ``(1/2) Im Lambda_4(M4; u, ū, u, ū)``.

    The left side is the centered difference ``(E(u(dt)) - E(u(-dt))) / (2 dt)``
    from one Strang step each way.  With ``dealias`` the discrete flow has an
    alias-free cubic term, which is what the hyperplane sum describes.
    """
    cfg = SolverConfig(dt=dt, sign=sign, dealias=dealias)
    Ep = modified_energy_D(step(u, cfg, dt), s, N)
    Em = modified_energy_D(step(u, cfg, -dt), s, N)
    lhs = (Ep - Em) / (2.0 * dt)
    sigma = cfg.sigma
    lam = eval_lambda_n(SymbolM("M4", s, N), [u, u, u, u])
    rhs = 0.5 * sigma * float(np.imag(lam))
    denom = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / denom if denom > 0 else 0.0
    return lhs, rhs, rel


# --- filter bound scan -------------------------------------------------------

@dataclass
class ScanResult:
    s: float
    N: float
    N_sop: float
    samples: int
    max_ratio: float
    p99_ratio: float
    histogram: Tuple[np.ndarray, np.ndarray]


def _sample_hyperplane(rng: np.random.Generator, n_samples: int, N_sop: float) -> np.ndarray:
    """Tuples on x1+x2+x3+x4 = 0 with every |x_i| in [N_sop/2, 2 N_sop]."""
    lo, hi = 0.5 * N_sop, 2.0 * N_sop
    out: List[np.ndarray] = []
    have = 0
    while have < n_samples:
        batch = max(4 * (n_samples - have), 1024)
        mag = rng.uniform(lo, hi, size=(batch, 3))
        sgn = rng.choice([-1.0, 1.0], size=(batch, 3))
        x = mag * sgn
        x4 = -x.sum(axis=1)
        ok = (np.abs(x4) >= lo) & (np.abs(x4) <= hi)
        t = np.column_stack([x[ok], x4[ok]])
        out.append(t)
        have += t.shape[0]
    return np.concatenate(out)[:n_samples]


def filter_ratio(xis: np.ndarray, s: float, N: float, N_sop: float) -> np.ndarray:
    """``|M4| / (|2 (x1+x4)(x1+x2)| * theta(N_sop)^2 / N_sop^2)`` row-wise."""
    x1, x2, x3, x4 = xis.T
    num = np.abs(SymbolM("M4", s, N)(x1, x2, x3, x4))
    den = np.abs(2.0 * (x1 + x4) * (x1 + x2))
    scale = _theta(np.array([N_sop]), s, N)[0] ** 2 / N_sop**2
    return num / (den * scale)


def filter_bound_scan(s: float, N: float, N_sop: float, n_samples: int, *, seed: int = 0,
                      floor: float = 1e-3, bins: int = 50) -> ScanResult:
    """Monte Carlo sup of the filter ratio in the comparable-frequency regime.

    Samples with ``|(x1+x2)(x1+x4)| < floor * N_sop^2`` are excluded; that
    region is probed separately by :func:`degenerate_limit_probe`.
    """
    rng = np.random.default_rng(seed)
    xis = _sample_hyperplane(rng, n_samples, N_sop)
    x1, x2, _, x4 = xis.T
    keep = np.abs((x1 + x2) * (x1 + x4)) >= floor * N_sop**2
    r = filter_ratio(xis[keep], s, N, N_sop)
    hist = np.histogram(r, bins=bins)
    return ScanResult(s, N, N_sop, int(keep.sum()), float(r.max(initial=0.0)),
                      float(np.percentile(r, 99)) if r.size else 0.0, hist)


def degenerate_limit_probe(s: float, N: float, x1: float, c: float,
                           eps: Sequence[float]) -> np.ndarray:
    """Filter ratio along ``x1+x2 = e -> 0`` with ``x1+x4 = c`` held fixed."""
    out = []
    for e in eps:
        x2 = -x1 + e
        x4 = -x1 + c
        x3 = -(x1 + x2 + x4)
        out.append(filter_ratio(np.array([[x1, x2, x3, x4]]), s, N, abs(x1))[0])
    return np.array(out)


def scan_rows_csv(results: Sequence[ScanResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "N", "N_sop", "samples", "max_ratio", "p99_ratio"])
    for r in results:
        w.writerow([repr(float(r.s)), repr(float(r.N)), repr(float(r.N_sop)), r.samples,
                    repr(r.max_ratio), repr(r.p99_ratio)])
    return buf.getvalue()


# --- Leibniz-type lattice scans ----------------------------------------------

def leibniz_scan(grid: GridSpec, weight: Callable[[np.ndarray], np.ndarray]) -> float:
    """``max w(x+y) / (w(x) + w(y))`` over lattice pairs with |x|, |y| <= xi_max/2."""
    h = grid.num_modes // 4
    ks = np.arange(-h, h + 1) * grid.dxi
    wk = weight(ks)
    best = 0.0
    for i, a in enumerate(ks):
        r = weight(a + ks) / (wk[i] + wk)
        best = max(best, float(r.max()))
    return best


# --- Omega functional ----------------------------------------------------------

def omega_integrand(v: Field, s: float, N: float, *, dealias: bool = False) -> float:
    """``<i I(v_xx + F(v)), -I v_xx + I v - F(I v)>`` at one time."""
    g = v.grid
    mI = MultiplierSpec.m(s, N).symbol(g.xi)
    mI[g.nyquist_index] = 0.0
    xi2 = g.xi**2
    vc = v.spectrum
    Fv = nonlinearity_F(v, dealias).spectrum
    Ivc = mI * vc
    Iv = Field.from_spectrum(g, Ivc)
    FIv = nonlinearity_F(Iv, dealias).spectrum
    left = 1j * mI * (-xi2 * vc + Fv)
    right = xi2 * Ivc + Ivc - FIv
    right[g.nyquist_index] = 0.0
    return float(g.box_length * np.real(np.sum(left * np.conj(right))))


def omega_functional(fields: Sequence[Field], times: Sequence[float], s: float, N: float,
                     window: Optional[Tuple[float, float]] = None, *, dealias: bool = False) -> float:
    """Trapezoidal time integral of :func:`omega_integrand` over recorded samples."""
    times = np.asarray(times, dtype=float)
    if window is None:
        window = (times[0], times[-1])
    t0, t1 = window
    tol = 1e-9 * max(1.0, abs(t1))
    if t0 < times[0] - tol or t1 > times[-1] + tol or t1 < t0:
        raise ConfigurationError(f"window {window} lies outside the trajectory")
    sel = (times >= t0 - tol) & (times <= t1 + tol)
    vals = np.array([omega_integrand(f, s, N, dealias=dealias)
                     for f, keep in zip(fields, sel) if keep])
    return float(np.trapezoid(vals, times[sel]))
