"""Invariant checks run by ``needlet-bispec validate``."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .diagrams import DiagramTable, hermite, hermite_product_moment
from .field_model import derive_seed, gaussian_alm_array, make_power_spectrum
from .harmonics import analyze_array, gaunt, sph_harm_array, synthesize_array, wigner3j
from .needlet_frame import NeedletCoefficients, build_window, needlet_analyze_array
from .sphere_grid import build_grid, gl_grid


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float


def _check(name, value, tol):
    return Check(name, bool(value <= tol), float(value), float(tol))


def partition_of_unity(lmax=512, Bs=(1.5, 2.0)):
    worst = 0.0
    ls = np.arange(1, lmax + 1)
    for B in Bs:
        w = build_window(B)
        jmax = int(math.ceil(math.log(lmax) / math.log(B))) + 2
        s = sum(w.b2(ls / B**j) for j in range(jmax + 1))
        worst = max(worst, float(np.max(np.abs(s - 1))))
    return worst


def cubature_exactness(B=2.0, jmax=5, n=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in range(jmax + 1):
        g = build_grid(B, j)
        if g.lmax < 1:
            continue
        for _ in range(n // (jmax + 1) + 1):
            l = int(rng.integers(1, g.lmax + 1))
            m = int(rng.integers(-l, l + 1))
            v = np.sum(g.weights * sph_harm_array(l, m, g.theta, g.phi))
            worst = max(worst, abs(v))
    return worst


def zero_sum(n_fields=50, levels=(3, 4, 5), B=2.0, seed=1):
    w = build_window(B)
    sp = make_power_spectrum([0, 0, 0, 1], max(w.band_lmax(j) for j in levels))
    alm = gaussian_alm_array(sp, [derive_seed(seed, r) for r in range(n_fields)])
    worst = 0.0
    for j in levels:
        g = build_grid(B, j)
        b = NeedletCoefficients(j, g, needlet_analyze_array(alm, w, g))
        worst = max(worst, float(np.max(b.zero_sum_residual())))
    return worst


def threej_orthogonality(n=20, lmax=20, seed=2):
    """``sum_{m1,m2} (2 l3 + 1) (l1 l2 l3; m1 m2 m3)(l1 l2 l3'; m1 m2 m3) = delta``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n:
        l1, l2 = (int(v) for v in rng.integers(0, lmax + 1, size=2))
        lo, hi = abs(l1 - l2), min(l1 + l2, lmax)
        if lo > hi:
            continue
        l3, l3p = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        m3 = int(rng.integers(-min(l3, l3p), min(l3, l3p) + 1))
        s = 0.0
        for m1 in range(-l1, l1 + 1):
            m2 = -m1 - m3
            if abs(m2) > l2:
                continue
            s += wigner3j(l1, l2, l3, m1, m2, m3) * wigner3j(l1, l2, l3p, m1, m2, m3)
        s *= 2 * l3 + 1
        worst = max(worst, abs(s - (1.0 if l3 == l3p else 0.0)))
        done += 1
    return worst


def gaunt_vs_cubature(n=50, lmax=12, seed=3):
    rng = np.random.default_rng(seed)
    g = gl_grid(3 * lmax)
    worst = 0.0
    for _ in range(n):
        l1, l2, l3 = (int(v) for v in rng.integers(0, lmax + 1, size=3))
        m1 = int(rng.integers(-l1, l1 + 1))
        m2 = int(rng.integers(-l2, l2 + 1))
        m3 = -m1 - m2
        if abs(m3) > l3:
            m3 = int(np.clip(m3, -l3, l3))
        direct = np.sum(g.weights * sph_harm_array(l1, m1, g.theta, g.phi)
                        * sph_harm_array(l2, m2, g.theta, g.phi)
                        * sph_harm_array(l3, m3, g.theta, g.phi))
        worst = max(worst, abs(direct - gaunt(l1, l2, l3, m1, m2, m3)))
    return worst


def _quadrature_moment(rows, cov):
    """``E prod H_{l_i}(z_i)`` by tensor Gauss-Hermite quadrature (exact for polynomials)."""
    p = len(rows)
    chol = np.linalg.cholesky(cov + 0.0)
    x, wts = hermegauss(sum(rows) // 2 + 2)
    wts = wts / np.sqrt(2 * np.pi)
    total = 0.0
    for idx in itertools.product(range(x.size), repeat=p):
        u = chol @ x[list(idx)]
        total += np.prod(wts[list(idx)]) * np.prod([hermite(q, ui) for q, ui in zip(rows, u)])
    return float(total)


def diagram_vs_quadrature(seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for rows in [(1, 1), (2, 2), (1, 2, 1), (2, 2, 2), (3, 3), (2, 3, 1), (2, 2, 2, 2)]:
        p = len(rows)
        a = rng.normal(size=(p, p + 2))
        c = a @ a.T
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        worst = max(worst, abs(hermite_product_moment(DiagramTable(rows), c) - _quadrature_moment(rows, c)))
    return worst


def transform_round_trip(lmax=32, seed=5):
    rng = np.random.default_rng(seed)
    g = gl_grid(2 * lmax)
    a = rng.normal(size=(lmax + 1, lmax + 1)) + 1j * rng.normal(size=(lmax + 1, lmax + 1))
    a = np.tril(a)
    a[:, 0] = a[:, 0].real
    back = analyze_array(synthesize_array(a, g), g, lmax)
    return float(np.max(np.abs(back - a)))


def run_checks(quick: bool = False):
    if quick:
        return [
            _check("partition_of_unity", partition_of_unity(lmax=200), 1e-10),
            _check("cubature_exactness", cubature_exactness(jmax=3, n=40), 1e-9),
            _check("zero_sum", zero_sum(n_fields=5, levels=(3, 4)), 1e-8),
            _check("threej_orthogonality", threej_orthogonality(n=10, lmax=10), 1e-10),
            _check("gaunt_vs_cubature", gaunt_vs_cubature(n=10, lmax=6), 1e-8),
            _check("diagram_vs_quadrature", diagram_vs_quadrature(), 1e-9),
            _check("transform_round_trip", transform_round_trip(lmax=16), 1e-8),
        ]
    return [
        _check("partition_of_unity", partition_of_unity(), 1e-10),
        _check("cubature_exactness", cubature_exactness(), 1e-9),
        _check("zero_sum", zero_sum(), 1e-8),
        _check("threej_orthogonality", threej_orthogonality(), 1e-10),
        _check("gaunt_vs_cubature", gaunt_vs_cubature(), 1e-8),
        _check("diagram_vs_quadrature", diagram_vs_quadrature(), 1e-9),
        _check("transform_round_trip", transform_round_trip(), 1e-8),
    ]
