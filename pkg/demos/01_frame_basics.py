"""Window, grids and the reconstruction property of the needlet frame.

Run with ``python3 demos/01_frame_basics.py``.
"""
import numpy as np

from needlet_bispectrum import build_grid, build_window, grid_diagnostics, make_power_spectrum, sample_gaussian_alm
from needlet_bispectrum.needlet_frame import needlet_analyze

B = 2.0
w = build_window(B)

# The squared window telescopes, so the bands sum to one at every multipole.
ls = np.arange(1, 513)
total = sum(w.b2(ls / B**j) for j in range(12))
print(f"partition of unity, max error over l=1..512: {np.max(np.abs(total - 1)):.2e}")

# Each level carries its own exact cubature grid.
for j in range(6):
    g = build_grid(B, j)
    d = grid_diagnostics(g)
    print(f"j={j}: lmax={g.lmax:4d} N={g.N:6d} separation={d['separation']:.4f} mesh={d['mesh_norm']:.4f}")

# Coefficients of a Gaussian field sum to zero on every level (no monopole).
sp = make_power_spectrum([0, 0, 0, 1], w.band_lmax(5))
alm = sample_gaussian_alm(sp, seed=1)
for j in (3, 4, 5):
    b = needlet_analyze(alm, w, build_grid(B, j))
    print(f"j={j}: relative zero-sum residual {float(np.max(b.zero_sum_residual())):.1e}")
