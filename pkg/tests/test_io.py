import numpy as np
import pytest

from needlet_bispectrum import (
    HarmonicCoefficients,
    InvalidArgumentError,
    build_grid,
    build_window,
    make_power_spectrum,
    needlet_analyze,
    sample_gaussian_alm,
)
from needlet_bispectrum.io import (
    read_alm_csv,
    read_jsonl,
    read_spectrum_csv,
    write_alm_csv,
    write_jsonl,
    write_needlet_csv,
    write_spectrum_csv,
)


def test_alm_round_trip(tmp_path):
    sp = make_power_spectrum([0, 0, 0, 1], 20)
    c = sample_gaussian_alm(sp, 4)
    p = tmp_path / "a.csv"
    write_alm_csv(p, c)
    text = p.read_text().splitlines()
    assert text[0] == "# alm v1 lmax=20"
    assert len(text) == 1 + 21 * 22 // 2
    back = read_alm_csv(p)
    assert np.array_equal(back.alm, c.alm)


def test_alm_reader_rejections(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,0,1.0,0.0\n")
    with pytest.raises(InvalidArgumentError, match="header"):
        read_alm_csv(p)
    p.write_text("# alm v1 lmax=2\n1,0,1.0,1e-6\n")
    with pytest.raises(InvalidArgumentError, match="imaginary"):
        read_alm_csv(p)
    p.write_text("# alm v1 lmax=2\n1,2,1.0,0.0\n")
    with pytest.raises(InvalidArgumentError):
        read_alm_csv(p)
    p.write_text("# alm v1 lmax=2\n1,0,1.0,1e-12\n")
    assert read_alm_csv(p).alm[1, 0] == 1.0


def test_spectrum_round_trip(tmp_path):
    sp = make_power_spectrum([1, 0, 0, 1], 30)
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, sp)
    back = read_spectrum_csv(p)
    assert np.array_equal(back.cl, sp.cl)
    assert back.alpha == sp.alpha


def test_needlet_csv(tmp_path):
    sp = make_power_spectrum([0, 0, 0, 1], 16)
    g = build_grid(2.0, 2)
    b = needlet_analyze(sample_gaussian_alm(sp, 1), build_window(2.0), g)
    p = tmp_path / "n.csv"
    write_needlet_csv(p, b, 2.0, sp.ident)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# needlets B=2.0 spectrum=")
    assert lines[1] == "j,k,theta,phi,weight,beta"
    assert len(lines) == 2 + g.N
    assert float(lines[2].split(",")[5]) == b.beta[0]


def test_jsonl_round_trip(tmp_path):
    recs = [{"a": 1, "b": [1.5, 2]}, {"a": 2}]
    write_jsonl(tmp_path / "x.jsonl", recs)
    assert read_jsonl(tmp_path / "x.jsonl") == recs
