"""Legendre functions, spherical harmonics, transforms and 3j symbols.

Conventions: orthonormal complex harmonics with the Condon-Shortley phase,
``Y_l,-m = (-1)^m conj(Y_lm)``.  Coefficient arrays hold ``a[l, m]`` for
``0 <= m <= l`` and zero above the diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgumentError
from .sphere_grid import CubatureGrid, SphericalPoint

_FOUR_PI = 4.0 * np.pi
_REALITY_TOL = 1e-12


# ---------------------------------------------------------------- Legendre

def legendre_p(l: int, x):
    """Legendre polynomial ``P_l(x)`` by the three-term recurrence.

    Accepts scalar or array ``x``; raises for ``|x| > 1``.
    """
    if l < 0 or int(l) != l:
        raise InvalidArgumentError(f"degree must be a non-negative integer, got {l}")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1 + 1e-14):
        raise InvalidArgumentError("legendre_p requires |x| <= 1")
    xa = np.clip(xa, -1.0, 1.0)
    p_prev = np.ones_like(xa)
    if l == 0:
        return p_prev if xa.ndim else float(p_prev)
    p = xa.copy()
    for n in range(2, l + 1):
        p, p_prev = ((2 * n - 1) * xa * p - (n - 1) * p_prev) / n, p
    return p if xa.ndim else float(p)


def legendre_table(lmax: int, x):
    """``P_l(x)`` for all ``l <= lmax``; shape ``(lmax + 1,) + x.shape``."""
    xa = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    out = np.empty((lmax + 1,) + xa.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = xa
    for n in range(2, lmax + 1):
        out[n] = ((2 * n - 1) * xa * out[n - 1] - (n - 1) * out[n - 2]) / n
    return out


def _log_sectoral(m_values, sin_theta):
    """log of |lambda_mm| = log of sqrt((2m+1)!!/(2m)!! / 4pi) sin^m."""
    m_values = np.asarray(m_values)
    k = np.arange(1, int(m_values.max(initial=0)) + 1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.log((2 * k + 1) / (2 * k)))])
    with np.errstate(divide="ignore"):
        log_s = np.log(sin_theta)
    base = -0.5 * np.log(_FOUR_PI) + cum[m_values]
    mm = m_values.reshape(m_values.shape + (1,) * np.ndim(sin_theta))
    with np.errstate(invalid="ignore"):
        prod = np.where(mm == 0, 0.0, mm * log_s)
    return base.reshape(mm.shape) + prod


def alf_table(lmax: int, x):
    """Normalized associated Legendre values ``lambda_lm(x)``.

    ``Y_lm(theta, phi) = lambda_lm(cos theta) exp(i m phi)``.  Returns an
    array of shape ``(lmax + 1, lmax + 1, len(x))`` indexed ``[l, m, i]``
    (zero for ``m > l``).  The sectoral start is formed in log space, so
    factors such as ``sin(theta)^m`` underflow cleanly to zero instead of
    overflowing, and the upward recurrence in ``l`` then stays bounded.
    """
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), -1.0, 1.0)
    s = np.sqrt((1.0 - x) * (1.0 + x))
    L = int(lmax)
    P = np.zeros((L + 1, L + 1, x.size))
    m = np.arange(L + 1)
    sign = np.where(m % 2 == 1, -1.0, 1.0)[:, None]
    diag = sign * np.exp(_log_sectoral(m, s))
    P[m, m] = diag
    lf = np.arange(L + 1, dtype=float)[:, None]
    mf = m[None, :].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((4 * lf**2 - 1) / (lf**2 - mf**2))
        b = np.sqrt(((lf - 1) ** 2 - mf**2) / (4 * (lf - 1) ** 2 - 1))
    for l in range(1, L + 1):
        mm = slice(0, l)
        prev2 = P[l - 2, mm] if l >= 2 else 0.0
        P[l, mm] = a[l, mm, None] * (x * P[l - 1, mm] - b[l, mm, None] * prev2)
    return P


def _alf_column(m: int, lmax: int, x):
    """``lambda_lm(x)`` for ``l = m..lmax`` at fixed ``m``; shape ``(lmax-m+1, n)``."""
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), -1.0, 1.0)
    s = np.sqrt((1.0 - x) * (1.0 + x))
    out = np.zeros((lmax - m + 1, x.size))
    out[0] = (-1.0) ** m * np.exp(_log_sectoral(np.array([m]), s))[0]
    for i, l in enumerate(range(m + 1, lmax + 1), start=1):
        a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
        b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
        prev2 = out[i - 2] if i >= 2 else 0.0
        out[i] = a * (x * out[i - 1] - b * prev2)
    return out


def sph_harm_array(l: int, m: int, theta, phi):
    """Vectorized ``Y_lm(theta, phi)``."""
    if abs(m) > l or l < 0:
        raise InvalidArgumentError(f"need |m| <= l, got l={l}, m={m}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    lam = _alf_column(am, l, np.cos(theta).ravel())[-1].reshape(theta.shape)
    y = lam * np.exp(1j * am * phi)
    if m < 0:
        y = (-1) ** am * np.conj(y)
    return y


def sph_harm(l: int, m: int, p: SphericalPoint) -> complex:
    """Orthonormal spherical harmonic ``Y_lm`` at point ``p``."""
    return complex(sph_harm_array(l, m, p.theta, p.phi))


# ------------------------------------------------------------ coefficients

@dataclass(eq=False)
class HarmonicCoefficients:
    """Coefficients ``a_lm`` of a real field, stored for ``m >= 0``.

    ``alm`` has shape ``(lmax + 1, lmax + 1)``; entry ``[l, m]`` for
    ``m <= l``.  Negative orders follow ``a_l,-m = (-1)^m conj(a_lm)``.
    """

    lmax: int
    alm: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alm, dtype=complex)
        L = int(self.lmax)
        if a.shape != (L + 1, L + 1):
            raise InvalidArgumentError(f"alm shape {a.shape} does not match lmax={L}")
        a = np.tril(a)
        diag0 = a[:, 0]
        if np.any(np.abs(diag0.imag) > _REALITY_TOL * max(1.0, np.max(np.abs(diag0.real), initial=0))):
            raise InvalidArgumentError("a_l0 must be real")
        a[:, 0] = diag0.real
        self.alm = a
        self.lmax = L

    @classmethod
    def zeros(cls, lmax: int) -> "HarmonicCoefficients":
        return cls(lmax, np.zeros((lmax + 1, lmax + 1), dtype=complex))

    def get(self, l: int, m: int) -> complex:
        if not (0 <= l <= self.lmax and abs(m) <= l):
            raise InvalidArgumentError(f"(l={l}, m={m}) out of range")
        v = self.alm[l, abs(m)]
        return complex(v) if m >= 0 else complex((-1) ** m * np.conj(v))

    def truncate(self, lmax: int) -> "HarmonicCoefficients":
        if lmax > self.lmax:
            a = np.zeros((lmax + 1, lmax + 1), dtype=complex)
            a[: self.lmax + 1, : self.lmax + 1] = self.alm
            return HarmonicCoefficients(lmax, a)
        return HarmonicCoefficients(lmax, self.alm[: lmax + 1, : lmax + 1].copy())

    def power(self):
        """Empirical spectrum ``sum_m |a_lm|^2 / (2l + 1)``."""
        a2 = np.abs(self.alm) ** 2
        tot = a2[:, 0] + 2 * a2[:, 1:].sum(axis=1)
        return tot / (2 * np.arange(self.lmax + 1) + 1)


# ------------------------------------------------------------- transforms

@lru_cache(maxsize=32)
def _ring_table(lmax: int, grid_lmax: int):
    # GL grids depend only on their degree, so the table is keyed on it
    from .sphere_grid import gl_grid

    g = gl_grid(grid_lmax)
    P = alf_table(lmax, g.ring_cos())
    Pm = np.ascontiguousarray(P.transpose(1, 0, 2))  # [m, l, ring]
    Pm.setflags(write=False)
    return Pm


def _check_gl(grid: CubatureGrid):
    if grid.n_theta * grid.n_phi != grid.N or grid.n_phi != grid.lmax + 1:
        raise InvalidArgumentError("transforms need a Gauss-Legendre ring grid")


def synthesize_array(alm, grid: CubatureGrid):
    """Real field values from coefficient arrays of shape ``(..., L+1, L+1)``.

    Returns shape ``(..., grid.N)``.  Batched over leading axes.
    """
    alm = np.asarray(alm)
    L = alm.shape[-1] - 1
    if L > grid.lmax:
        raise InvalidArgumentError(f"coefficient lmax {L} exceeds grid lmax {grid.lmax}")
    _check_gl(grid)
    batch = alm.shape[:-2]
    A = alm.reshape((-1, L + 1, L + 1))
    R = A.shape[0]
    Pm = _ring_table(L, grid.lmax)  # [m, l, i]
    Am = A.transpose(2, 0, 1)  # [m, R, l]
    g = np.matmul(Am.real, Pm) + 1j * np.matmul(Am.imag, Pm)  # [m, R, i]
    g[1:] *= 2.0
    H = np.zeros((R, grid.n_theta, grid.n_phi), dtype=complex)
    H[:, :, : L + 1] = g.transpose(1, 2, 0)
    vals = (np.fft.ifft(H, axis=-1) * grid.n_phi).real
    return vals.reshape(batch + (grid.N,))


def analyze_array(values, grid: CubatureGrid, lmax: int, check: bool = True):
    """Coefficient arrays ``(..., lmax+1, lmax+1)`` from field values ``(..., N)``."""
    values = np.asarray(values, dtype=float)
    if check and 2 * lmax > grid.lmax:
        raise InvalidArgumentError(
            f"analysis to lmax={lmax} needs grid lmax >= {2 * lmax}, got {grid.lmax}")
    if lmax > grid.lmax:
        raise InvalidArgumentError("lmax exceeds grid degree")
    _check_gl(grid)
    batch = values.shape[:-1]
    V = values.reshape((-1, grid.n_theta, grid.n_phi))
    F = np.fft.fft(V, axis=-1)[:, :, : lmax + 1]  # [R, i, m]
    F *= (grid.ring_weights() * (2 * np.pi / grid.n_phi))[None, :, None]
    Pm = _ring_table(lmax, grid.lmax)  # [m, l, i]
    Fm = F.transpose(2, 1, 0)  # [m, i, R]
    # conj(Y) brings exp(-i m phi), which the forward FFT already supplies
    a = np.matmul(Pm, Fm.real) + 1j * np.matmul(Pm, Fm.imag)  # [m, l, R]
    out = a.transpose(2, 1, 0)  # [R, l, m]
    out = np.tril(out)
    out[..., :, 0] = out[..., :, 0].real
    return out.reshape(batch + (lmax + 1, lmax + 1))


def sht_analyze(grid: CubatureGrid, values, lmax: int) -> HarmonicCoefficients:
    """``a_lm = sum_k lambda_k f(xi_k) conj(Y_lm(xi_k))``; needs ``2 lmax <= grid.lmax``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N,):
        raise InvalidArgumentError(f"expected {grid.N} values, got shape {values.shape}")
    return HarmonicCoefficients(lmax, analyze_array(values, grid, lmax))


def sht_synthesize(coeffs: HarmonicCoefficients, grid: CubatureGrid):
    """Field values ``sum a_lm Y_lm`` at the grid points."""
    return synthesize_array(coeffs.alm, grid)


# ------------------------------------------------------------- 3j symbols

def _triangle(l1, l2, l3):
    return abs(l1 - l2) <= l3 <= l1 + l2


@lru_cache(maxsize=200_000)
def wigner3j(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol from the Racah single-sum formula.

    The alternating sum is accumulated exactly as a rational number and the
    factorial prefactor is combined in log space, so no digits are lost to
    cancellation for any ``l`` up to several hundred.
    """
    ls = (l1, l2, l3)
    ms = (m1, m2, m3)
    if any(int(v) != v for v in ls + ms):
        raise InvalidArgumentError("3j arguments must be integers")
    if any(l < 0 for l in ls) or any(abs(m) > l for l, m in zip(ls, ms)):
        raise InvalidArgumentError("need l >= 0 and |m| <= l")
    if m1 + m2 + m3 != 0 or not _triangle(l1, l2, l3):
        return 0.0
    if m1 == m2 == m3 == 0 and (l1 + l2 + l3) % 2:
        return 0.0
    f = math.factorial
    t_min = max(0, l2 - l3 - m1, l1 - l3 + m2)
    t_max = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    s = Fraction(0)
    for t in range(t_min, t_max + 1):
        den = (f(t) * f(l3 - l2 + t + m1) * f(l3 - l1 + t - m2)
               * f(l1 + l2 - l3 - t) * f(l1 - t - m1) * f(l2 - t + m2))
        s += Fraction(-1 if t % 2 else 1, den)
    if s == 0:
        return 0.0
    pref = Fraction(f(l1 + l2 - l3) * f(l1 - l2 + l3) * f(-l1 + l2 + l3), f(l1 + l2 + l3 + 1))
    for l, m in zip(ls, ms):
        pref *= f(l + m) * f(l - m)
    sq = pref * s * s
    log_val = 0.5 * (math.log(sq.numerator) - math.log(sq.denominator))
    sign = (-1) ** ((l1 - l2 - m3) % 2) * (1 if s > 0 else -1)
    return sign * math.exp(log_val)


def threej_000(l1, l2, l3):
    """Vectorized ``(l1 l2 l3; 0 0 0)`` from its closed factorial form.

    With ``2g = l1 + l2 + l3`` even the symbol is
    ``(-1)^g sqrt((2g-2l1)!(2g-2l2)!(2g-2l3)!/(2g+1)!) g!/((g-l1)!(g-l2)!(g-l3)!)``,
    a product with no cancellation, evaluated through ``gammaln``.
    """
    l1, l2, l3 = np.broadcast_arrays(*(np.asarray(v, dtype=np.int64) for v in (l1, l2, l3)))
    J = l1 + l2 + l3
    ok = (J % 2 == 0) & (np.abs(l1 - l2) <= l3) & (l3 <= l1 + l2) & (l1 >= 0) & (l2 >= 0) & (l3 >= 0)
    g = J // 2
    gs = np.where(ok, g, 0)
    a1, a2, a3 = (np.where(ok, gs - v, 0) for v in (l1, l2, l3))
    logv = (0.5 * (gammaln(2 * a1 + 1) + gammaln(2 * a2 + 1) + gammaln(2 * a3 + 1) - gammaln(2 * gs + 2))
            + gammaln(gs + 1) - gammaln(a1 + 1) - gammaln(a2 + 1) - gammaln(a3 + 1))
    val = np.where(gs % 2 == 1, -1.0, 1.0) * np.exp(logv)
    out = np.where(ok, val, 0.0)
    return out if out.ndim else float(out)


def gaunt(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """``integral of Y_l1m1 Y_l2m2 Y_l3m3`` over the sphere."""
    w = wigner3j(l1, l2, l3, m1, m2, m3)
    if w == 0.0:
        return 0.0
    w0 = wigner3j(l1, l2, l3, 0, 0, 0)
    return math.sqrt((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / (4 * math.pi)) * w * w0
