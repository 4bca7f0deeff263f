import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from needlet_bispectrum import (
    DegenerateVarianceError,
    InvalidArgumentError,
    build_grid,
    estimate_sigma,
    h_weight,
    make_config,
    make_power_spectrum,
    needlet_analyze,
    needlet_bispectrum,
    partial_sum_J1,
    partial_sum_J2,
    sample_gaussian_alm,
    studentized_bispectrum,
    theoretical_variance,
)
from needlet_bispectrum.bispectrum import accumulate, triangle_offsets, variance_components
from needlet_bispectrum.field_model import derive_seed, gaussian_alm_array
from needlet_bispectrum.needlet_frame import NeedletCoefficients, band_power, needlet_analyze_array

from oracles import exact_variance


@pytest.fixture(scope="module")
def sp64():
    return make_power_spectrum([0, 0, 0, 1], 64)


def _coeffs(alm, w, sp, j):
    g = build_grid(w.B, j)
    return NeedletCoefficients(j, g, needlet_analyze_array(alm, w, g),
                               sigma_j_sq=4 * np.pi * band_power(sp, w, j) / g.N)


# ------------------------------------------------------------------ weights

def test_equilateral_weight():
    cfg = make_config(2.0, 3, 3, 3)
    g = build_grid(2.0, 3)
    assert np.array_equal(cfg.h, np.sqrt(g.weights))
    assert h_weight(cfg, 5) == math.sqrt(g.weights[5])


def test_squeezed_weight_formula():
    cfg = make_config(2.0, 2, 4, 4)
    g1 = build_grid(2.0, 2)
    cnt = cfg.child_count[cfg.k1]
    assert np.allclose(cfg.h, 4.0 * np.sqrt(g1.weights[cfg.k1]) / cnt, rtol=1e-15)
    full = cnt == 16
    assert full.any()
    assert np.allclose(cfg.h[full], np.sqrt(g1.weights[cfg.k1[full]]) / 4, rtol=1e-15)
    assert np.all(cfg.h > 0)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        make_config(2.0, 3, 2, 4)
    with pytest.raises(InvalidArgumentError):
        make_config(2.0, 3, 3, 3, K=-1)
    with pytest.raises(InvalidArgumentError):
        make_config(2.0, 3, 3, 6, require_admissible=True)
    with pytest.raises(InvalidArgumentError):
        h_weight(make_config(2.0, 1, 1, 1), 10**6)


def test_admissibility():
    assert make_config(2.0, 4, 4, 4, K=3).admissible
    assert make_config(2.0, 2, 4, 4, K=2).admissible
    assert not make_config(2.0, 3, 4, 4, K=2).admissible
    assert not make_config(2.0, 1, 2, 4).admissible  # 2 + 4 < 16
    assert make_config(1.5, 1, 2, 3, K=1).admissible


def test_chain_consistency():
    cfg = make_config(2.0, 1, 2, 3)
    assert cfg.case == "all-distinct"
    assert cfg.k2.shape == (build_grid(2.0, 3).N,)
    assert cfg.k1.max() < build_grid(2.0, 1).N


# --------------------------------------------------------------- statistic

def test_zero_low_band_gives_zero(window2, sp64):
    alm = sample_gaussian_alm(sp64, 1).alm
    b = [_coeffs(alm, window2, sp64, j) for j in (2, 4, 4)]
    b[0] = NeedletCoefficients(2, b[0].grid, np.zeros_like(b[0].beta), b[0].sigma_j_sq)
    assert needlet_bispectrum(*b, make_config(2.0, 2, 4, 4)).I == 0.0


def test_odd_under_sign_flip(window2, sp64):
    alm = sample_gaussian_alm(sp64, 2).alm
    cfg = make_config(2.0, 2, 4, 4)
    p = needlet_bispectrum(*[_coeffs(alm, window2, sp64, j) for j in (2, 4, 4)], cfg).I
    m = needlet_bispectrum(*[_coeffs(-alm, window2, sp64, j) for j in (2, 4, 4)], cfg).I
    assert p == -m and p != 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**32), st.floats(-3, 3), st.floats(-3, 3))
def test_trilinearity(s1, s2, a, b):
    cfg = make_config(2.0, 1, 2, 2)
    g1, g2 = build_grid(2.0, 1), build_grid(2.0, 2)
    r1, r2 = np.random.default_rng(s1), np.random.default_rng(s2)
    x, y = r1.normal(size=g1.N), r2.normal(size=g1.N)
    u, v = r1.normal(size=g2.N), r2.normal(size=g2.N)
    lhs = accumulate(a * x + b * y, u, v, cfg)
    rhs = a * accumulate(x, u, v, cfg) + b * accumulate(y, u, v, cfg)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
    lhs = accumulate(x, u, a * u + b * v, cfg)
    rhs = a * accumulate(x, u, u, cfg) + b * accumulate(x, u, v, cfg)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def test_batched_matches_single(window2, sp64):
    cfg = make_config(2.0, 2, 4, 4)
    alm = gaussian_alm_array(sp64, [derive_seed(5, r) for r in range(3)])
    bh = [needlet_analyze_array(alm, window2, build_grid(2.0, j)) for j in (2, 4, 4)]
    batch = accumulate(*bh, cfg)
    for r in range(3):
        assert batch[r] == pytest.approx(accumulate(bh[0][r], bh[1][r], bh[2][r], cfg), rel=1e-13)


def test_null_mean_monte_carlo(window2, sp64):
    cfg = make_config(2.0, 2, 4, 4)
    R = 2000
    out = []
    for s0 in range(0, R, 500):
        alm = gaussian_alm_array(sp64, [derive_seed(41, r) for r in range(s0, s0 + 500)])
        bh = [needlet_analyze_array(alm, window2, build_grid(2.0, j)) for j in (2, 4, 4)]
        out.append(accumulate(*bh, cfg))
    x = np.concatenate(out)
    assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(R)


# ------------------------------------------------------------ studentized

def test_estimate_sigma_examples():
    assert estimate_sigma(np.full(10, 3.0)) == 9.0
    assert estimate_sigma(np.zeros(4)) == 0.0
    g = build_grid(2.0, 1)
    z = NeedletCoefficients(1, g, np.zeros(g.N))
    cfg = make_config(2.0, 1, 1, 1)
    with pytest.raises(DegenerateVarianceError):
        studentized_bispectrum(z, z, z, cfg)


def test_studentized_equals_normalized_when_sigma_injected(window2, sp64):
    alm = sample_gaussian_alm(sp64, 3).alm
    cfg = make_config(2.0, 2, 4, 4)
    bs = [_coeffs(alm, window2, sp64, j) for j in (2, 4, 4)]
    inj = [NeedletCoefficients(b.j, b.grid, b.beta, sigma_j_sq=estimate_sigma(b)) for b in bs]
    assert needlet_bispectrum(*inj, cfg).I == pytest.approx(studentized_bispectrum(*bs, cfg), rel=1e-14)


@pytest.mark.parametrize("c", [7.0, 0.01])
def test_studentized_scale_invariant(window2, sp64, c):
    alm = sample_gaussian_alm(sp64, 4).alm
    cfg = make_config(2.0, 2, 4, 4)
    a = studentized_bispectrum(*[_coeffs(alm, window2, sp64, j) for j in (2, 4, 4)], cfg)
    b = studentized_bispectrum(*[_coeffs(c * alm, window2, sp64, j) for j in (2, 4, 4)], cfg)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_sigma_estimate_consistent(window2, sp64):
    j = 4
    g = build_grid(2.0, j)
    R = 400
    alm = gaussian_alm_array(sp64, [derive_seed(9, r) for r in range(R)])
    ratio = estimate_sigma(needlet_analyze_array(alm, window2, g)) / (4 * np.pi * band_power(sp64, window2, j) / g.N)
    assert abs(ratio.mean() - 1) <= 3 * ratio.std(ddof=1) / math.sqrt(R)


# ----------------------------------------------------------------- variance

def test_variance_parity_zero_asymptotic_mode(window2):
    cl = np.zeros(40)
    cl[5] = 1.0  # odd l alone in band 2: l + l + l odd
    cfg = make_config(2.0, 2, 2, 2)
    assert theoretical_variance(cl, window2, cfg, mode="asymptotic") == 0.0


@pytest.mark.parametrize("triple", [(2, 2, 2), (1, 2, 2), (0, 2, 2), (1, 3, 3)])
def test_variance_against_wick_oracle(window2, sp64, triple):
    # measured relative gaps: 1.0%, 1.8%, 1e-15, 1e-15
    cfg = make_config(2.0, *triple)
    exact = exact_variance(cfg, window2, sp64)
    assert theoretical_variance(sp64, window2, cfg) == pytest.approx(exact, rel=0.025)


def test_variance_positive_and_bounded(window2, sp64):
    sp = make_power_spectrum([0, 0, 0, 1], 128)
    v = [theoretical_variance(sp, window2, make_config(2.0, j, j, j)) for j in (3, 4, 5)]
    assert all(x > 0 for x in v)
    assert max(v) / min(v) <= 5


def test_variance_components_sum(window2, sp64):
    cfg = make_config(2.0, 2, 4, 4)
    c = variance_components(sp64, window2, cfg)
    assert c["cross"] + c["same_point"] == pytest.approx(theoretical_variance(sp64, window2, cfg), rel=1e-12)


def test_variance_mode_validation(window2, sp64):
    with pytest.raises(InvalidArgumentError):
        theoretical_variance(sp64, window2, make_config(2.0, 2, 2, 2), mode="bogus")


# ------------------------------------------------------------- partial sums

def _ones_J1(L, K):
    return {(j1, m): 1.0 for j1 in range(1, L + 1) for m in range(L)}


def test_partial_J1_examples():
    t = _ones_J1(2, 1)
    assert partial_sum_J1(t, 2, 0.0, 1.0, 1) == 0.0
    assert partial_sum_J1(t, 2, 1.0, 1.0, 1) == 2.0
    with pytest.raises(InvalidArgumentError):
        partial_sum_J1({}, 2, 1.0, 1.0, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0, 1), st.floats(0, 1))
def test_partial_J1_count(L, r1, r2):
    v = partial_sum_J1(_ones_J1(L, 1), L, r1, r2, 1)
    assert v == pytest.approx(math.floor(L * r1 + 1e-12) * math.floor(L * r2 + 1e-12) / L)


def test_triangle_offsets_enumeration():
    # brute force over a generous box
    def brute(B, K):
        out = []
        for m1 in range(50):
            for m2 in range(50):
                j1, j2, j3 = 0, K + m1, 2 * K + m1 + m2
                if 1 + B**j2 >= B**j3 * (1 - 1e-12) and m1 >= 0:
                    out.append((m1, m2))
        return out

    for B, K in [(1.5, 1), (1.5, 2), (1.2, 1), (1.2, 2), (1.1, 3)]:
        got = triangle_offsets(B, K)
        assert sorted(got) == sorted(brute(B, K))
    assert triangle_offsets(1.5, 2) == []
    assert triangle_offsets(1.5, 1) == [(0, 0)]


def test_partial_J2_examples():
    L, K, B = 3, 1, 1.5
    offs = triangle_offsets(B, K)
    t = {(j, m1, m2): 1.0 for j in range(1, L + 1) for m1, m2 in offs}
    assert partial_sum_J2(t, L, 0.0, K, B) == 0.0
    assert partial_sum_J2(t, L, 1.0, K, B) == pytest.approx(L * len(offs) / math.sqrt(L * len(offs)))
    with pytest.raises(InvalidArgumentError):
        partial_sum_J2(t, L, 1.0, 2, B)
