"""Power spectra, Gaussian and local non-Gaussian sampling, expected bispectra."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .harmonics import HarmonicCoefficients, analyze_array, synthesize_array, threej_000
from .sphere_grid import CubatureGrid, gl_grid


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """Angular power spectrum ``C_l`` for ``0 <= l <= lmax`` (``C_0 = 0``).

    ``descriptor`` records how the table was built; ``alpha`` is the decay
    exponent for inverse-polynomial models.
    """

    lmax: int
    cl: np.ndarray = field(repr=False)
    descriptor: dict = field(default_factory=dict)
    alpha: float | None = None
    low_order_warning: bool = False

    @property
    def ident(self) -> str:
        d = self.descriptor
        if d.get("model") == "inverse_polynomial":
            return "invpoly:" + ",".join(repr(float(c)) for c in d["d"]) + f";lmax={self.lmax}"
        return f"table;lmax={self.lmax}"

    @classmethod
    def from_table(cls, cl, alpha=None) -> "PowerSpectrum":
        cl = np.array(cl, dtype=float)
        if cl.ndim != 1 or np.any(cl < 0) or not np.all(np.isfinite(cl)):
            raise InvalidArgumentError("C_l table must be a finite non-negative vector")
        cl[0] = 0.0
        cl.setflags(write=False)
        return cls(cl.size - 1, cl, {"model": "table"}, alpha)

    def truncate(self, lmax: int) -> "PowerSpectrum":
        if lmax > self.lmax:
            raise InvalidArgumentError("cannot extend a spectrum by truncation")
        if self.descriptor.get("model") == "inverse_polynomial":
            return make_power_spectrum(self.descriptor["d"], lmax)
        return PowerSpectrum.from_table(self.cl[: lmax + 1], self.alpha)

    def field_variance(self) -> float:
        """``E T^2 = sum_l (2l+1) C_l / (4 pi)``."""
        l = np.arange(self.lmax + 1)
        return float(np.sum((2 * l + 1) * self.cl) / (4 * np.pi))


def make_power_spectrum(d, lmax: int) -> PowerSpectrum:
    """``C_l = 1 / sum_k d_k l^k`` for ``1 <= l <= lmax``, ``C_0 = 0``.

    The model order ``p`` is the index of the last non-zero ``d_k``.  ``p = 2``
    is accepted with a warning; lower orders are rejected.
    """
    d = [float(v) for v in d]
    nz = [k for k, v in enumerate(d) if v != 0.0]
    if not nz:
        raise InvalidArgumentError("all polynomial coefficients are zero")
    p = nz[-1]
    if p < 2:
        raise InvalidArgumentError(f"polynomial order p={p} < 2 gives a non-summable spectrum")
    low = p == 2
    if low:
        warnings.warn("spectrum of order p=2: field variance diverges logarithmically with lmax",
                      stacklevel=2)
    if lmax < 1:
        raise InvalidArgumentError("lmax must be >= 1")
    l = np.arange(1, lmax + 1, dtype=float)
    den = np.polynomial.polynomial.polyval(l, d)
    if np.any(den <= 0):
        bad = int(l[np.argmax(den <= 0)])
        raise InvalidArgumentError(f"non-positive spectrum denominator at l={bad}")
    cl = np.concatenate([[0.0], 1.0 / den])
    cl.setflags(write=False)
    return PowerSpectrum(lmax, cl, {"model": "inverse_polynomial", "d": d}, float(p), low)


def condition_a_constant(spectrum: PowerSpectrum, B: float, jmax: int) -> float:
    """Smallest ``c0`` with ``l^alpha C_l`` in ``[1/c0, c0]`` on every band up to ``jmax``."""
    if spectrum.alpha is None:
        raise InvalidArgumentError("spectrum has no decay exponent")
    c0 = 1.0
    for j in range(0, jmax + 1):
        lo, hi = B ** (j - 1), B ** (j + 1)
        l = np.arange(max(1, int(np.floor(lo)) + 1), min(spectrum.lmax, int(np.ceil(hi)) - 1) + 1)
        if l.size == 0:
            continue
        g = l.astype(float) ** spectrum.alpha * spectrum.cl[l]
        c0 = max(c0, float(g.max()), float(1.0 / g.min()))
    return c0


# ----------------------------------------------------------------- seeds

def derive_seed(master: int, index: int) -> int:
    """64-bit seed for replication ``index`` of a campaign seeded by ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _normals(seed: int, n: int):
    # Philox keyed by the seed: the i-th normal depends only on (seed, i)
    gen = np.random.Generator(np.random.Philox(key=int(seed) % 2**64))
    return gen.standard_normal(n)


def _unit_alm(seed: int, lmax: int):
    """Unit-variance complex coefficients in the fixed counter layout.

    Normal number ``l^2`` gives ``a_l0``; numbers ``l^2 + 2m - 1`` and
    ``l^2 + 2m`` give the real and imaginary parts of ``a_lm``.  Each entry
    therefore depends only on ``(seed, l, m)``, not on ``lmax``.
    """
    z = _normals(seed, (lmax + 1) ** 2)
    a = np.zeros((lmax + 1, lmax + 1), dtype=complex)
    for l in range(lmax + 1):
        blk = z[l * l:(l + 1) ** 2]
        a[l, 0] = blk[0]
        if l:
            a[l, 1:l + 1] = (blk[1::2] + 1j * blk[2::2]) / np.sqrt(2.0)
    return a


def gaussian_alm_array(spectrum: PowerSpectrum, seeds):
    """Stacked Gaussian coefficient arrays, one per seed."""
    sq = np.sqrt(spectrum.cl)[:, None]
    return np.stack([_unit_alm(s, spectrum.lmax) * sq for s in seeds])


def sample_gaussian_alm(spectrum: PowerSpectrum, seed: int) -> HarmonicCoefficients:
    """Gaussian coefficients: ``a_l0 ~ N(0, C_l)``; ``Re, Im a_lm ~ N(0, C_l / 2)``."""
    return HarmonicCoefficients(spectrum.lmax, gaussian_alm_array(spectrum, [seed])[0])


# ------------------------------------------------------------ non-Gaussian

@dataclass(frozen=True)
class NonGaussianSpec:
    """Local-type model with amplitude ``f_nl`` on top of ``base``."""

    f_nl: float
    base: PowerSpectrum

    def __post_init__(self):
        if not np.isfinite(self.f_nl):
            raise InvalidArgumentError("f_nl must be finite")

    @property
    def local_coefficient(self) -> float:
        # pointwise coefficient giving the reduced bispectrum -6 f_nl (C C + C C + C C)
        return -3.0 * self.f_nl


def default_work_grid(spectrum: PowerSpectrum) -> CubatureGrid:
    """Grid exact for ``T^2 * Y_lm`` with ``l <= lmax`` (degree ``3 lmax``)."""
    return gl_grid(3 * spectrum.lmax)


def local_ng_from_gaussian(alm_g, spec: NonGaussianSpec, work_grid: CubatureGrid):
    """Apply the pointwise quadratic map to stacked Gaussian coefficients."""
    L = spec.base.lmax
    if work_grid.lmax < 2 * L:
        raise InvalidArgumentError(f"work grid lmax {work_grid.lmax} < 2 * {L}")
    if spec.f_nl == 0.0:
        return np.array(alm_g, copy=True)
    T = synthesize_array(alm_g, work_grid)
    T = T + spec.local_coefficient * (T * T - spec.base.field_variance())
    out = analyze_array(T, work_grid, L, check=False)
    return out


def sample_local_ng(spec: NonGaussianSpec, seed: int, work_grid: CubatureGrid | None = None
                    ) -> HarmonicCoefficients:
    """Local non-Gaussian coefficients.

    Draws ``T_G`` with :func:`sample_gaussian_alm`, forms
    ``T = T_G + c (T_G^2 - E T_G^2)`` on ``work_grid`` with ``c = -3 f_nl``
    and analyzes back to the base ``lmax``.  At ``f_nl = 0`` the Gaussian
    coefficients are returned unchanged.
    """
    if work_grid is None:
        work_grid = default_work_grid(spec.base)
    a = gaussian_alm_array(spec.base, [seed])
    return HarmonicCoefficients(spec.base.lmax, local_ng_from_gaussian(a, spec, work_grid)[0])


def reduced_bispectrum_sw(base: PowerSpectrum, f_nl: float, l1, l2, l3):
    """``b_l1l2l3 = -6 f_nl (C_l1 C_l2 + C_l1 C_l3 + C_l2 C_l3)``."""
    c = base.cl
    c1, c2, c3 = c[np.asarray(l1)], c[np.asarray(l2)], c[np.asarray(l3)]
    out = -6.0 * f_nl * (c1 * c2 + c1 * c3 + c2 * c3)
    return out if np.ndim(out) else float(out)


# ------------------------------------------------------- band triple sums

def triple_band_sum(ls1, w1, ls2, w2, ls3, w3, kernel=None):
    """``sum w1(l1) w2(l2) w3(l3) K(l1,l2,l3) (l1 l2 l3; 0 0 0)^2``.

    ``K`` defaults to 1; otherwise a vectorized callable.  Parity and
    triangle rules prune the sum (the 3j factor vanishes there anyway).
    """
    total = 0.0
    L2, L3 = np.meshgrid(np.asarray(ls2), np.asarray(ls3), indexing="ij")
    W23 = np.outer(w2, w3)
    for l1, a in zip(ls1, w1):
        if a == 0:
            continue
        ok = ((l1 + L2 + L3) % 2 == 0) & (np.abs(L2 - L3) <= l1) & (l1 <= L2 + L3)
        if not ok.any():
            continue
        t = threej_000(l1, L2[ok], L3[ok]) ** 2
        term = W23[ok] * t
        if kernel is not None:
            term = term * kernel(l1, L2[ok], L3[ok])
        total += a * float(term.sum())
    return total


def expected_needlet_bispectrum(base: PowerSpectrum, f_nl: float, w, j1: int, j2: int, j3: int,
                                mode: str = "grid", cfg=None) -> float:
    """Expected value of the normalized statistic under the local model.

    ``mode="asymptotic"`` evaluates
    ``B^j3 / sqrt(S1 S2 S3) * sum b b b b_l1l2l3 (3j)_0^2 prod(2l+1) / (4 pi)``
    with band powers ``S_j``.  ``mode="grid"`` (default) replaces ``B^j3`` by
    the exact sum of the statistic's weights on the cubature grids and keeps
    the ``P_l(cos d)`` factor of the one band that is read at a coarser point.
    """
    from .bispectrum import make_config, mean_grid_factor
    from .needlet_frame import band_power

    if not (j1 <= j2 <= j3):
        raise InvalidArgumentError("need j1 <= j2 <= j3")
    if f_nl == 0:
        return 0.0
    S = [band_power(base, w, j) for j in (j1, j2, j3)]
    bands = [w.band(j) for j in (j1, j2, j3)]
    for ls, _ in bands:
        if ls.max() > base.lmax:
            raise InvalidArgumentError("band exceeds spectrum range")
    (l1s, b1), (l2s, b2), (l3s, b3) = bands
    c = base.cl

    def bisp(a, b_, d):
        return reduced_bispectrum_sw(base, f_nl, a, b_, d)

    def kern(a, b_, d):
        return bisp(a, b_, d) * (2 * a + 1) * (2 * b_ + 1) * (2 * d + 1) / (4 * np.pi)

    if mode == "asymptotic":
        s = triple_band_sum(l1s, b1, l2s, b2, l3s, b3, kernel=kern)
        return w.B**j3 * s / np.sqrt(S[0] * S[1] * S[2])
    if mode != "grid":
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if cfg is None:
        cfg = make_config(w.B, j1, j2, j3)
    band_idx, fac = mean_grid_factor(cfg, w)
    if band_idx is None:
        s = fac * triple_band_sum(l1s, b1, l2s, b2, l3s, b3, kernel=kern)
    else:
        s = triple_band_sum(l1s, b1, l2s, b2, l3s, b3,
                            kernel=lambda a, b_, d: kern(a, b_, d) * fac[(a, b_, d)[band_idx]])
    return s / np.sqrt(S[0] * S[1] * S[2])
