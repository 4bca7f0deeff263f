"""The needlet bispectrum statistic, its variance and partial-sum processes."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateCellError, DegenerateVarianceError, InvalidArgumentError
from .harmonics import analyze_array, legendre_table
from .needlet_frame import NeedletCoefficients, NeedletWindow, band_power
from .sphere_grid import CubatureGrid, angle_between, associate_levels, build_grid

CASES = ("all-distinct", "squeezed", "equilateral")


@dataclass(frozen=True, eq=False)
class BispectrumConfig:
    """Levels, grids and the index chain ``k3 -> (k2, k1)`` of one triple.

    ``k2[k3]`` is the level-``j2`` parent of point ``k3`` (itself when
    ``j2 == j3``) and ``k1[k3]`` the level-``j1`` parent of ``k2[k3]``.
    ``h`` holds the weight of each ``k3``.
    """

    B: float
    j1: int
    j2: int
    j3: int
    K: int
    grids: tuple = field(repr=False)
    k1: np.ndarray = field(repr=False)
    k2: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    child_count: np.ndarray | None = field(default=None, repr=False)

    @property
    def triple(self):
        return (self.j1, self.j2, self.j3)

    @property
    def case(self) -> str:
        if self.j1 == self.j2 == self.j3:
            return "equilateral"
        if self.j1 < self.j2 == self.j3:
            return "squeezed"
        return "all-distinct"

    @property
    def admissible(self) -> bool:
        """Level gap ``j2 - j1 >= K`` and ``B^j1 + B^j2 >= B^j3`` (always true when equilateral)."""
        if self.case == "equilateral":
            return True
        return (self.j2 - self.j1 >= self.K
                and self.B**self.j1 + self.B**self.j2 >= self.B**self.j3 * (1 - 1e-12))

    def summary(self) -> dict:
        return {"triple": list(self.triple), "B": self.B, "K": self.K, "case": self.case}


@lru_cache(maxsize=64)
def _cached_config(B: float, j1: int, j2: int, j3: int, K: int) -> BispectrumConfig:
    g1, g2, g3 = (build_grid(B, j) for j in (j1, j2, j3))
    if j2 == j3:
        k2 = np.arange(g3.N)
    else:
        k2 = np.asarray(associate_levels(g3, g2).parent)
    counts = None
    if j1 == j2:
        k1 = k2.copy()
    else:
        amap = associate_levels(g2, g1)
        k1 = np.asarray(amap.parent)[k2]
        counts = np.asarray(amap.child_count)
    if j1 < j2 == j3:
        if np.any(counts == 0):
            raise DegenerateCellError(
                f"{int(np.sum(counts == 0))} empty level-{j1} cells for level {j2}")
        h = B ** (j2 - j1) * np.sqrt(g1.weights[k1]) / counts[k1]
    else:
        h = np.sqrt(g3.weights)
    for arr in (k1, k2, h):
        arr.setflags(write=False)
    return BispectrumConfig(B, j1, j2, j3, K, (g1, g2, g3), k1, k2, h, counts)


def make_config(B: float, j1: int, j2: int, j3: int, K: int = 1,
                require_admissible: bool = False) -> BispectrumConfig:
    """Build (and cache) the configuration of the triple ``(j1, j2, j3)``."""
    if not (0 <= j1 <= j2 <= j3) or any(int(v) != v for v in (j1, j2, j3)):
        raise InvalidArgumentError(f"need integer levels 0 <= j1 <= j2 <= j3, got {(j1, j2, j3)}")
    if K < 0 or int(K) != K:
        raise InvalidArgumentError("K must be a non-negative integer")
    cfg = _cached_config(float(B), int(j1), int(j2), int(j3), int(K))
    if require_admissible and not cfg.admissible:
        raise InvalidArgumentError(f"triple {(j1, j2, j3)} is not admissible for B={B}, K={K}")
    return cfg


def h_weight(cfg: BispectrumConfig, k3: int) -> float:
    """Weight ``h`` attached to point ``k3`` of the finest level."""
    if not 0 <= k3 < cfg.h.size:
        raise InvalidArgumentError(f"k3={k3} out of range")
    return float(cfg.h[k3])


def _raw_weights(cfg: BispectrumConfig):
    """``r_k = h_k sqrt(lambda_1 lambda_2 lambda_3)`` along the chain."""
    g1, g2, g3 = cfg.grids
    return cfg.h * np.sqrt(g1.weights[cfg.k1] * g2.weights[cfg.k2] * g3.weights)


# ---------------------------------------------------------------- statistic

def accumulate(bhat1, bhat2, bhat3, cfg: BispectrumConfig):
    """``sum_k3 h bhat1[k1] bhat2[k2] bhat3[k3]`` (leading batch axes allowed)."""
    prod = np.take(bhat1, cfg.k1, axis=-1) * np.take(bhat2, cfg.k2, axis=-1) * bhat3
    return np.sum(prod * cfg.h, axis=-1)


@dataclass
class BispectrumValue:
    """Raw statistic ``I`` with its normalizations."""

    I: float
    var_theory: float | None
    I_hat: float | None
    I_tilde: float | None = None
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def record(self) -> dict:
        c = self.config
        return {"triple": c.get("triple"), "B": c.get("B"), "K": c.get("K"), "seed": self.seed,
                "I": self.I, "var_theory": self.var_theory, "I_hat": self.I_hat,
                "I_tilde": self.I_tilde}


def _check_levels(bs, cfg):
    for b, j in zip(bs, cfg.triple):
        if b.j != j:
            raise InvalidArgumentError(f"coefficients at level {b.j}, config expects {j}")


def needlet_bispectrum(b1: NeedletCoefficients, b2: NeedletCoefficients, b3: NeedletCoefficients,
                       cfg: BispectrumConfig, var_theory: float | None = None,
                       spectrum=None, window: NeedletWindow | None = None,
                       seed: int | None = None) -> BispectrumValue:
    """Statistic from coefficients normalized by their ``sigma_j``.

    ``var_theory`` is taken as given or computed with
    :func:`theoretical_variance` when ``spectrum`` and ``window`` are passed.
    """
    bs = (b1, b2, b3)
    _check_levels(bs, cfg)
    I = float(accumulate(*(b.normalized() for b in bs), cfg))
    if var_theory is None and spectrum is not None and window is not None:
        var_theory = theoretical_variance(spectrum, window, cfg)
    I_hat = None
    if var_theory is not None:
        if not var_theory > 0:
            raise DegenerateVarianceError("theoretical variance is zero")
        I_hat = I / math.sqrt(var_theory)
    I_tilde = None
    if all(np.all(estimate_sigma(b) > 0) for b in bs) and var_theory:
        I_tilde = studentized_bispectrum(b1, b2, b3, cfg) / math.sqrt(var_theory)
    return BispectrumValue(I, var_theory, I_hat, I_tilde, cfg.summary(), seed)


def estimate_sigma(b) -> float:
    """Plug-in variance ``mean_k beta_jk^2`` (per batch row for stacked input)."""
    beta = b.beta if isinstance(b, NeedletCoefficients) else np.asarray(b)
    if beta.shape[-1] == 0:
        raise InvalidArgumentError("empty coefficient set")
    out = np.mean(beta**2, axis=-1)
    return out if np.ndim(out) else float(out)


def studentized_bispectrum(b1, b2, b3, cfg: BispectrumConfig):
    """Statistic with each ``beta_j`` divided by ``sqrt(estimate_sigma)``."""
    bs = (b1, b2, b3)
    _check_levels(bs, cfg)
    hats = []
    for b in bs:
        s2 = estimate_sigma(b)
        if np.any(np.asarray(s2) <= 0):
            raise DegenerateVarianceError(f"estimated sigma is zero at level {b.j}")
        hats.append(b.beta / np.sqrt(np.asarray(s2))[..., None] if np.ndim(s2) else b.beta / math.sqrt(s2))
    out = accumulate(*hats, cfg)
    return out if np.ndim(out) else float(out)


# ----------------------------------------------------------------- variance

def _window_table(w: NeedletWindow, j: int, lmax: int):
    return w.filter(j, lmax)


def _perm_band_sum(spectrum, w, cfg, perm):
    """``sum_l prod_i [b_i b_perm(i) C (2l+1)/4pi] (3j)_0^2`` over the bands."""
    from .field_model import triple_band_sum

    cl = np.asarray(spectrum.cl)
    js = cfg.triple
    lists = []
    for i in range(3):
        ls, _ = w.band(js[i])
        wa = w.b(ls / w.B ** js[i]) * w.b(ls / w.B ** js[perm[i]]) * cl[ls] * (2 * ls + 1) / (4 * np.pi)
        keep = wa > 0
        if not keep.any():
            return 0.0
        lists.append((ls[keep], wa[keep]))
    (a, wa), (b, wb), (c, wc) = lists
    return triple_band_sum(a, wa, b, wb, c, wc)


def _cross_cov(spectrum, w, ja, jb, cosd):
    """``c_ab(d) = sum_l b_a b_b C_l (2l+1)/4pi P_l(cos d)``."""
    cl = np.asarray(spectrum.cl)
    ls, _ = w.band(ja)
    wt = w.b(ls / w.B**ja) * w.b(ls / w.B**jb) * cl[ls] * (2 * ls + 1) / (4 * np.pi)
    keep = wt > 0
    if not keep.any():
        return np.zeros_like(np.asarray(cosd, dtype=float))
    ls, wt = ls[keep], wt[keep]
    cosd = np.asarray(cosd, dtype=float)
    uniq, inv = np.unique(np.round(cosd, 15), return_inverse=True)
    P = legendre_table(int(ls.max()), uniq)[ls]
    return (wt @ P)[inv.reshape(cosd.shape)]


def _chain_points(cfg):
    g1, g2, g3 = cfg.grids
    idx = (cfg.k1, cfg.k2, np.arange(g3.N))
    vecs = [g.unit_vectors()[i] for g, i in zip(cfg.grids, idx)]
    return idx, vecs


def _self_pair_variance(spectrum, w, cfg, r):
    """Variance of ``sum_c X_c`` with ``X_c = sum_k r_k c_ab(k) f_c(y_c(k))``.

    These are the nine Wick pairings that join two factors at the same
    ``k3``; they vanish on a perfect grid by the weighted zero-sum identity
    and are evaluated here exactly.
    """
    cl = np.asarray(spectrum.cl)
    idx, vecs = _chain_points(cfg)
    js = cfg.triple
    A = []
    Lb = max(w.band_lmax(j) for j in js)
    for c in range(3):
        a, b = [i for i in range(3) if i != c]
        cosd = np.sum(vecs[a] * vecs[b], axis=-1)
        s_ab = _cross_cov(spectrum, w, js[a], js[b], np.clip(cosd, -1, 1))
        v = r * s_ab
        if not np.any(v):
            continue
        g = cfg.grids[c]
        m = np.bincount(idx[c], weights=v, minlength=g.N)
        # the analysis transform multiplies by lambda, so divide it out
        Lc = w.band_lmax(js[c])
        Ac = np.zeros((Lb + 1, Lb + 1), dtype=complex)
        Ac[: Lc + 1, : Lc + 1] = analyze_array(m / g.weights, g, Lc, check=False)
        A.append(w.filter(js[c], Lb)[:, None] * Ac)
    if not A:
        return 0.0
    tot = np.sum(A, axis=0)
    p = np.abs(tot) ** 2
    per_l = p[:, 0] + 2 * p[:, 1:].sum(axis=1)
    return float(np.sum(cl[: Lb + 1] * per_l))


def _sigma_sq(spectrum, w, cfg):
    return [4 * np.pi * band_power(spectrum, w, j) / g.N for j, g in zip(cfg.triple, cfg.grids)]


def _full_sum_sq(g, grid, L):
    """``sum_{l<=L} sum_{all m} |sum_k g_k Y_lm(x_k)|^2`` per ``l`` for complex ``g``."""
    # plain sums, so undo the cubature weights the analysis applies
    aR = analyze_array(g.real / grid.weights, grid, L, check=False)
    aI = analyze_array(g.imag / grid.weights, grid, L, check=False)
    pos = np.abs(aR + 1j * aI) ** 2
    neg = np.abs(np.conj(aR) + 1j * np.conj(aI)) ** 2
    return pos[:, 0] + (pos[:, 1:] + neg[:, 1:]).sum(axis=1)


def _coupled_weights(spectrum, w, ja, jb, jc, jd, Lmax):
    """``D_L`` with ``c_ab(x, x') c_cd(x, x') = sum_L D_L (2L+1)/4pi P_L(x.x')``."""
    from .field_model import triple_band_sum

    cl = np.asarray(spectrum.cl)
    ls1, _ = w.band(ja)
    ls2, _ = w.band(jc)
    w1 = w.b(ls1 / w.B**ja) * w.b(ls1 / w.B**jb) * cl[ls1] * (2 * ls1 + 1)
    w2 = w.b(ls2 / w.B**jc) * w.b(ls2 / w.B**jd) * cl[ls2] * (2 * ls2 + 1)
    D = np.zeros(Lmax + 1)
    if not (np.any(w1) and np.any(w2)):
        return D
    for L in range(Lmax + 1):
        D[L] = triple_band_sum(ls1, w1, ls2, w2, [L], [1.0]) / (4 * np.pi)
    return D


def _displaced_cross(spectrum, w, cfg, r, swap):
    """Exact cross pairing that keeps band 1 on itself when only band 1 is displaced.

    ``sum_kk' r r' c_11(y, y') c_2a(x, x') c_3b(x, x')`` is expanded in
    ``Y_l1m1(y) Y_LM(x)`` products, which turns the double sum into squared
    transforms of the weights ``r_k Y_l1m1(y_k)`` on the finest grid.
    """
    cl = np.asarray(spectrum.cl)
    j1, j2, j3 = cfg.triple
    ja, jb = (j3, j2) if swap else (j2, j3)
    g3 = cfg.grids[2]
    L = w.band_lmax(j2) + w.band_lmax(j3)
    L = min(L, g3.lmax)
    D = _coupled_weights(spectrum, w, j2, ja, j3, jb, L)
    if not np.any(D):
        return 0.0
    ls1, b1 = w.band(j1)
    g1 = cfg.grids[0]
    y = g1.unit_vectors()[cfg.k1]
    theta, phi = np.arccos(np.clip(y[:, 2], -1, 1)), np.arctan2(y[:, 1], y[:, 0])
    from .harmonics import _alf_column

    total = 0.0
    for m1 in range(int(ls1.max()) + 1):
        lam = _alf_column(m1, int(ls1.max()), np.cos(theta))  # rows l = m1..max
        ph = np.exp(1j * m1 * phi)
        for l1, bb in zip(ls1, b1):
            if l1 < m1:
                continue
            g = r * lam[l1 - m1] * ph
            per_L = _full_sum_sq(g, g3, L)
            total += (1 if m1 == 0 else 2) * bb**2 * cl[l1] * float(per_L @ D)
    return total


def _as_spectrum(spectrum):
    if hasattr(spectrum, "cl"):
        return spectrum
    from .field_model import PowerSpectrum

    return PowerSpectrum.from_table(spectrum)


def variance_components(spectrum, w: NeedletWindow, cfg: BispectrumConfig) -> dict:
    """Cross-pairing and same-point parts of ``Var I`` on the actual grids.

    Cross pairings use the cubature identity ``sum_k' r_k' c(x_k, x_k')
    ~ (r_k / lambda_k) integral c`` except for squeezed triples, where the
    pairings that keep the coarse band on itself are evaluated exactly.
    """
    spectrum = _as_spectrum(spectrum)
    if max(w.band_lmax(j) for j in cfg.triple) > spectrum.lmax:
        raise InvalidArgumentError("bands exceed spectrum range")
    sig = _sigma_sq(spectrum, w, cfg)
    norm = sig[0] * sig[1] * sig[2]
    r = _raw_weights(cfg)
    g3 = cfg.grids[2]
    density = float(np.sum(r**2 / g3.weights))
    cross = 0.0
    for perm in itertools.permutations(range(3)):
        if cfg.case == "squeezed" and perm[0] == 0:
            cross += _displaced_cross(spectrum, w, cfg, r, swap=perm[1] == 2) / norm
        else:
            cross += density * 4 * np.pi * _perm_band_sum(spectrum, w, cfg, perm) / norm
    same = _self_pair_variance(spectrum, w, cfg, r) / norm
    return {"cross": cross, "same_point": same, "grid_factor": density * 4 * np.pi / norm}


def theoretical_variance(spectrum, w: NeedletWindow, cfg: BispectrumConfig,
                         mode: str = "grid") -> float:
    """Second moment of the statistic for a Gaussian field.

    ``mode="asymptotic"``:
        ``B^(2 j3) sum_l prod[b^2 C (2l+1)] (3j)_0^2 / (4 pi) / (S1 S2 S3)``
        with band powers ``S_j``.
    ``mode="grid"`` (default):
        the same band sum, but with ``B^(2 j3)`` replaced by the exact
        weight density of the grids, all six cross pairings of the three
        bands (so equal levels count 2 or 6 times), and the same-point
        pairings evaluated exactly.
    """
    js = cfg.triple
    spectrum = _as_spectrum(spectrum)
    if mode == "asymptotic":
        S = [band_power(spectrum, w, j) for j in js]
        s = _perm_band_sum(spectrum, w, cfg, (0, 1, 2))
        return float(w.B ** (2 * js[2]) * s * (4 * np.pi) ** 2 / (S[0] * S[1] * S[2]))
    if mode != "grid":
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    comp = variance_components(spectrum, w, cfg)
    v = comp["cross"] + comp["same_point"]
    if not v > 0:
        raise DegenerateVarianceError(f"theoretical variance vanishes for {js}")
    return float(v)


def mean_grid_factor(cfg: BispectrumConfig, w: NeedletWindow):
    """Weight sum replacing ``B^j3`` in the expected statistic.

    Returns ``(band, table)``.  When one band is read at a point displaced
    from the others, its multipole picks up ``P_l(cos d)``; ``table[l]`` is
    then the weight sum with that factor and ``band`` its position.  With
    no displacement ``band`` is ``None`` and ``table`` a scalar.  For three
    distinct levels only the lowest band's displacement is kept.
    """
    r = _raw_weights(cfg)
    norm = 4 * np.pi * math.prod(math.sqrt(4 * np.pi / g.N) for g in cfg.grids)
    if cfg.case == "equilateral":
        return None, float(np.sum(r)) / norm
    idx, vecs = _chain_points(cfg)
    if cfg.j1 == cfg.j2:
        band, a, b = 2, 0, 2
    else:
        band, a, b = 0, 0, 2
    cosd = np.clip(np.sum(vecs[a] * vecs[b], axis=-1), -1, 1)
    Lb = w.band_lmax(cfg.triple[band])
    uniq, inv = np.unique(np.round(cosd, 15), return_inverse=True)
    rs = np.bincount(inv, weights=r)
    table = legendre_table(Lb, uniq) @ rs / norm
    return band, table


# ------------------------------------------------------------- partial sums

def _floor(x):
    return int(math.floor(x + 1e-12))


def _lookup(table, key):
    try:
        return table[key]
    except KeyError:
        raise InvalidArgumentError(f"table is missing entry {key}") from None


def partial_sum_J1(I_hat, L: int, r1: float, r2: float, K: int):
    """``(1/L) sum_{j1=1}^{[L r1]} sum_{m=0}^{[L r2]-1} I_hat[(j1, m)]``.

    ``I_hat[(j1, m)]`` is the normalized statistic of
    ``(j1, j1+K+m, j1+K+m)``; values may be arrays over replications.
    """
    if not (0 <= r1 <= 1 and 0 <= r2 <= 1):
        raise InvalidArgumentError("r1, r2 must lie in [0, 1]")
    total = 0.0
    for j1 in range(1, _floor(L * r1) + 1):
        for m in range(0, _floor(L * r2)):
            total = total + _lookup(I_hat, (j1, m))
    return total / L


def triangle_offsets(B: float, K: int):
    """Admissible ``(m1, m2)`` for triples ``(j, j+K+m1, j+2K+m1+m2)``.

    ``N1 = max{m1 : 1 + B^(K+m1) >= B^(2K+m1)}`` and
    ``N(m1) = max{m2 : 1 + B^(K+m1) >= B^(2K+m1+m2)}``, the largest offsets
    keeping ``B^j1 + B^j2 >= B^j3``.  Returns an empty list when even
    ``m1 = 0`` fails.
    """
    out = []
    eps = 1e-12
    m1 = 0
    while 1 + B ** (K + m1) >= B ** (2 * K + m1) * (1 - eps):
        m2 = 0
        while 1 + B ** (K + m1) >= B ** (2 * K + m1 + m2 + 1) * (1 - eps):
            m2 += 1
        out.extend((m1, k) for k in range(m2 + 1))
        m1 += 1
        if m1 > 200:
            raise InvalidArgumentError("offset set does not terminate")
    return out


def partial_sum_J2(I_hat, L: int, r: float, K: int, B: float):
    """Normalized partial sum over the admissible chain triples.

    ``(1 / sqrt(L * n)) sum_{j=1}^{[L r]} sum_{(m1, m2)} I_hat[(j, m1, m2)]``
    where ``n`` is the number of admissible offset pairs.
    """
    if not 0 <= r <= 1:
        raise InvalidArgumentError("r must lie in [0, 1]")
    offs = triangle_offsets(B, K)
    if not offs:
        raise InvalidArgumentError(f"no admissible offsets for B={B}, K={K}")
    total = 0.0
    for j in range(1, _floor(L * r) + 1):
        for m1, m2 in offs:
            total = total + _lookup(I_hat, (j, m1, m2))
    return total / math.sqrt(L * len(offs))
