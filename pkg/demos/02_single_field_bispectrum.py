"""One realization: needlet coefficients, the normalized statistic and its studentized twin."""
import numpy as np

from needlet_bispectrum import (
    build_grid,
    build_window,
    make_config,
    make_power_spectrum,
    needlet_analyze,
    needlet_bispectrum,
    sample_gaussian_alm,
    theoretical_variance,
)
from needlet_bispectrum.needlet_frame import band_power

B = 2.0
w = build_window(B)
sp = make_power_spectrum([0, 0, 0, 1], w.band_lmax(5))
alm = sample_gaussian_alm(sp, seed=2024)

for triple in [(3, 3, 3), (4, 4, 4), (2, 5, 5)]:
    cfg = make_config(B, *triple)
    bs = []
    for j in triple:
        g = build_grid(B, j)
        bs.append(needlet_analyze(alm, w, g, sigma_j_sq=4 * np.pi * band_power(sp, w, j) / g.N))
    val = needlet_bispectrum(*bs, cfg, var_theory=theoretical_variance(sp, w, cfg))
    print(f"{triple}: I = {val.I:9.3f}  normalized = {val.I_hat:6.3f}")
