"""Local non-Gaussianity shifts squeezed triples more than equilateral ones."""
from needlet_bispectrum import MCConfig, calibrate_fnl, run_power

base = MCConfig.from_dict({"B": 2.0, "alpha": 3, "triples": [[2, 4, 4], [4, 4, 4]], "R": 300,
                           "seed": 3})
f = calibrate_fnl(base, (2, 4, 4), target=1.0)
print(f"f_nl giving a unit shift at (2,4,4): {f:.4f}")
rep = run_power(MCConfig.from_dict({**base.to_dict(), "f_nl": f}))
for arm, d in rep["arms"].items():
    for key, s in d["summary"].items():
        print(f"{arm:8s} {key}: mean={s['mean']:+.3f} se={s['se']:.3f} "
              f"predicted={s['predicted_mean']:+.3f} detected={s['detected']}")
