"""Needlet window, needlet functions and needlet coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateVarianceError, InvalidArgumentError
from .harmonics import HarmonicCoefficients, legendre_table, synthesize_array
from .sphere_grid import CubatureGrid, SphericalPoint, angle_between, to_unit_vectors

_GL_ORDER = 128


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class NeedletWindow:
    """Smooth window with ``b^2(xi) = phi(xi / B) - phi(xi)``.

    ``phi`` is 1 on ``[0, 1/B]``, 0 on ``[1, inf)`` and in between equals the
    normalized running integral of ``exp(-1 / (1 - t^2))``.  Because ``b^2`` is
    a difference of the same ``phi``, the band sum over ``j`` telescopes and
    the partition of unity holds to round-off.
    """

    B: float
    eval_tolerance: float = 1e-12
    _norm: float = field(default=0.0, repr=False)
    _nodes: np.ndarray = field(default=None, repr=False)
    _wts: np.ndarray = field(default=None, repr=False)

    def _psi(self, u):
        # fixed-order Gauss-Legendre on [-1, u]
        u = np.asarray(u, dtype=float)
        t = (u[..., None] + 1) / 2 * self._nodes + (u[..., None] - 1) / 2
        return (_bump(t) * self._wts).sum(-1) * (u + 1) / 2 / self._norm

    def phi(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        B = self.B
        out = np.where(xi <= 1 / B, 1.0, 0.0)
        mid = (xi > 1 / B) & (xi < 1)
        if np.any(mid):
            u = 1 - 2 * B / (B - 1) * (xi[mid] - 1 / B)
            out[mid] = np.clip(self._psi(u), 0.0, 1.0)
        return out if out.ndim else float(out)

    def b2(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.asarray(self.phi(xi / self.B) - self.phi(xi), dtype=float)
        out = np.where(out < 0, 0.0, out)
        a = np.abs(xi)
        out = np.where((a <= 1 / self.B) | (a >= self.B), 0.0, out)
        return out if out.ndim else float(out)

    def b(self, xi):
        return np.sqrt(self.b2(xi))

    def band(self, j: int):
        """Multipoles with ``b(l / B^j) > 0`` and the window values there."""
        lo = int(math.floor(self.B ** (j - 1))) + 1
        hi = int(math.ceil(self.B ** (j + 1))) - 1
        ls = np.arange(max(lo, 0), hi + 1)
        bl = self.b(ls / self.B**j)
        keep = bl > 0
        return ls[keep], bl[keep]

    def band_lmax(self, j: int) -> int:
        ls, _ = self.band(j)
        return int(ls.max()) if ls.size else 0

    def filter(self, j: int, lmax: int):
        """``b(l / B^j)`` for ``l = 0..lmax``."""
        return self.b(np.arange(lmax + 1) / self.B**j)


def build_window(B: float, eval_tolerance: float = 1e-12) -> NeedletWindow:
    """Construct the needlet window for band ratio ``B``."""
    if not (np.isfinite(B) and B > 1):
        raise InvalidArgumentError(f"B must be > 1, got {B}")
    if not (0 < eval_tolerance <= 1e-6):
        raise InvalidArgumentError("eval_tolerance must lie in (0, 1e-6]")
    norm, _ = quad(lambda t: math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0,
                   -1, 1, epsabs=eval_tolerance / 10, epsrel=1e-14, limit=200)
    x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    win = NeedletWindow(float(B), float(eval_tolerance), norm, x, w)
    # self-check of the fixed quadrature order against doubling it
    probe = np.linspace(-0.99, 0.99, 9)
    x2, w2 = np.polynomial.legendre.leggauss(2 * _GL_ORDER)
    ref = NeedletWindow(float(B), float(eval_tolerance), norm, x2, w2)
    if np.max(np.abs(win._psi(probe) - ref._psi(probe))) > eval_tolerance:
        raise InvalidArgumentError("eval_tolerance too tight for the window quadrature")
    return win


@dataclass(eq=False)
class NeedletCoefficients:
    """Coefficients ``beta_jk`` at one level (``beta`` may carry batch axes)."""

    j: int
    grid: CubatureGrid
    beta: np.ndarray
    sigma_j_sq: float | None = None
    sigma_hat_sq: float | None = None

    def normalized(self):
        if not self.sigma_j_sq or self.sigma_j_sq <= 0:
            raise DegenerateVarianceError(f"sigma_j^2 not available or zero at j={self.j}")
        return self.beta / math.sqrt(self.sigma_j_sq)

    def zero_sum_residual(self):
        """``|sum beta sqrt(lambda)| / sqrt(sum beta^2 lambda)``."""
        sl = np.sqrt(self.grid.weights)
        num = np.abs(np.sum(self.beta * sl, axis=-1))
        den = np.sqrt(np.sum(self.beta**2 * self.grid.weights, axis=-1))
        return num / np.where(den > 0, den, 1.0)


def needlet_eval(w: NeedletWindow, grid: CubatureGrid, k: int, x) -> float:
    """Needlet ``psi_jk`` at point(s) ``x`` by the addition theorem.

    ``x`` is a :class:`SphericalPoint` or an array of unit vectors.
    """
    if not 0 <= k < grid.N:
        raise InvalidArgumentError(f"index {k} outside grid of size {grid.N}")
    ls, bl = w.band(grid.j)
    if isinstance(x, SphericalPoint):
        vec = x.unit_vector()
    else:
        vec = np.asarray(x, dtype=float)
    center = to_unit_vectors(grid.theta[k], grid.phi[k])
    cosd = np.cos(angle_between(vec, center))
    if ls.size == 0:
        return np.zeros_like(cosd) if np.ndim(cosd) else 0.0
    P = legendre_table(int(ls.max()), cosd)[ls]
    coef = bl * (2 * ls + 1) / (4 * np.pi)
    val = math.sqrt(grid.weights[k]) * np.tensordot(coef, P, axes=(0, 0))
    return val if np.ndim(val) else float(val)


def needlet_analyze_array(alm, w: NeedletWindow, grid: CubatureGrid):
    """Batched coefficients ``beta_jk`` from coefficient arrays ``(..., L+1, L+1)``."""
    alm = np.asarray(alm)
    L = alm.shape[-1] - 1
    need = w.band_lmax(grid.j)
    if L < need:
        # coefficients beyond L are zero
        pad = np.zeros(alm.shape[:-2] + (need + 1, need + 1), dtype=alm.dtype)
        pad[..., : L + 1, : L + 1] = alm
        alm = pad
    if need > grid.lmax:
        raise InvalidArgumentError("grid too coarse for the band")
    if need == 0:
        return np.zeros(alm.shape[:-2] + (grid.N,))
    bl = w.filter(grid.j, need)
    filt = alm[..., : need + 1, : need + 1] * bl[:, None]
    return np.sqrt(grid.weights) * synthesize_array(filt, grid)


def needlet_analyze(coeffs: HarmonicCoefficients, w: NeedletWindow, grid: CubatureGrid,
                    sigma_j_sq: float | None = None) -> NeedletCoefficients:
    """``beta_jk = sqrt(lambda_jk) sum_l b(l/B^j) sum_m a_lm Y_lm(xi_jk)``, in harmonic space."""
    if grid.B != w.B:
        raise InvalidArgumentError("grid and window use different B")
    beta = needlet_analyze_array(coeffs.alm, w, grid)
    return NeedletCoefficients(grid.j, grid, beta, sigma_j_sq=sigma_j_sq)


def _cl(spectrum):
    return np.asarray(getattr(spectrum, "cl", spectrum), dtype=float)


def band_power(spectrum, w: NeedletWindow, j: int) -> float:
    """``S_j = sum_l (2l+1)/(4 pi) b^2(l/B^j) C_l`` (variance of the band-filtered field)."""
    cl = _cl(spectrum)
    ls, bl = w.band(j)
    if ls.size and ls.max() >= cl.size:
        raise InvalidArgumentError(f"spectrum stops at l={cl.size - 1}, band {j} needs l={ls.max()}")
    s = float(np.sum((2 * ls + 1) / (4 * np.pi) * bl**2 * cl[ls]))
    if not s > 0:
        raise DegenerateVarianceError(f"spectrum vanishes on band j={j}")
    return s


def sigma_j(spectrum, w: NeedletWindow, j: int, grid: CubatureGrid) -> dict:
    """Per-point variances ``sigma_jk^2 = lambda_jk S_j`` and ``sigma_j^2 = 4 pi S_j / N_j``."""
    s = band_power(spectrum, w, j)
    return {"sigma_j_sq": 4 * np.pi * s / grid.N, "sigma_jk_sq": grid.weights * s}


def coefficient_correlation(spectrum, w: NeedletWindow, j: int, theta):
    """Correlation of two level-``j`` coefficients at angular distance ``theta``.

    ``sum (2l+1) b^2 C_l P_l(cos theta) / sum (2l+1) b^2 C_l``; the cubature
    weights cancel, so this is exact for any pair of points.
    """
    cl = _cl(spectrum)
    band_power(spectrum, w, j)
    ls, bl = w.band(j)
    wt = (2 * ls + 1) * bl**2 * cl[ls]
    th = np.asarray(theta, dtype=float)
    P = legendre_table(int(ls.max()), np.cos(th))[ls]
    val = np.tensordot(wt, P, axes=(0, 0)) / wt.sum()
    return val if np.ndim(val) else float(val)
