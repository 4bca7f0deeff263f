"""Readers and writers for the on-disk formats."""
from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .harmonics import HarmonicCoefficients

_ALM_HEADER = re.compile(r"#\s*alm v1 lmax=(\d+)\s*$")
_REALITY_TOL = 1e-9


def write_alm_csv(path, coeffs: HarmonicCoefficients):
    """``# alm v1 lmax=<n>`` then ``l,m,re,im`` for ``0 <= m <= l``."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# alm v1 lmax={coeffs.lmax}\n")
        for l in range(coeffs.lmax + 1):
            for m in range(l + 1):
                v = complex(coeffs.alm[l, m])
                fh.write(f"{l},{m},{v.real!r},{v.imag!r}\n")


def read_alm_csv(path) -> HarmonicCoefficients:
    with open(path) as fh:
        first = fh.readline()
        match = _ALM_HEADER.match(first.strip())
        if not match:
            raise InvalidArgumentError(f"{path}: missing '# alm v1 lmax=<n>' header")
        L = int(match.group(1))
        a = np.zeros((L + 1, L + 1), dtype=complex)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise InvalidArgumentError(f"{path}:{lineno}: expected 'l,m,re,im'")
            l, m = int(parts[0]), int(parts[1])
            re_, im = float(parts[2]), float(parts[3])
            if not (0 <= m <= l <= L):
                raise InvalidArgumentError(f"{path}:{lineno}: index (l={l}, m={m}) out of range")
            if m == 0 and abs(im) > _REALITY_TOL:
                raise InvalidArgumentError(f"{path}:{lineno}: a_{l}0 has imaginary part {im}")
            a[l, m] = re_ + 1j * (im if m else 0.0)
    return HarmonicCoefficients(L, a)


def write_spectrum_csv(path, spectrum):
    with open(path, "w", newline="") as fh:
        fh.write("# spectrum " + json.dumps(spectrum.descriptor, sort_keys=True) + "\n")
        fh.write("l,C_l\n")
        for l, c in enumerate(spectrum.cl):
            fh.write(f"{l},{float(c)!r}\n")


def read_spectrum_csv(path):
    from .field_model import PowerSpectrum, make_power_spectrum

    desc = None
    rows = []
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if s.startswith("# spectrum"):
                desc = json.loads(s[len("# spectrum"):])
            elif s and not s.startswith("#") and s != "l,C_l":
                l, c = s.split(",")
                rows.append((int(l), float(c)))
    cl = np.zeros(max(l for l, _ in rows) + 1)
    for l, c in rows:
        cl[l] = c
    if desc and desc.get("model") == "inverse_polynomial":
        return make_power_spectrum(desc["d"], cl.size - 1)
    return PowerSpectrum.from_table(cl)


def write_needlet_csv(path, coeffs, B: float, spectrum_id: str):
    """``j,k,theta,phi,weight,beta`` with ``B`` and the spectrum id in the header."""
    g = coeffs.grid
    with open(path, "w", newline="") as fh:
        fh.write(f"# needlets B={B!r} spectrum={spectrum_id}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", "theta", "phi", "weight", "beta"])
        for k in range(g.N):
            w.writerow([coeffs.j, k, repr(float(g.theta[k])), repr(float(g.phi[k])),
                        repr(float(g.weights[k])), repr(float(coeffs.beta[k]))])


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
