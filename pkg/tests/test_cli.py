import json
import subprocess
import sys

import pytest

from needlet_bispectrum.cli import main

CFG = {"B": 2.0, "alpha": 3, "triples": [[3, 3, 3]], "R": 100, "seed": 8}


def _cfg(tmp_path, **over):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**CFG, **over}))
    return str(p)


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_validate_quick(tmp_path, capsys):
    assert main(["validate", "--quick", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out
    assert _manifest(tmp_path)["status"] == "ok"


def test_window_table(tmp_path, capsys):
    assert main(["window", "--B", "2", "--check-l", "1..300", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "partition.csv").read_text().splitlines()
    assert lines[0] == "l,sum_b2,abs_error" and len(lines) == 301
    assert "ok" in capsys.readouterr().out


def test_grid_command(tmp_path, capsys):
    assert main(["grid", "--j", "3", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "grid.json").read_text())["N"] == 1225


def test_unknown_config_key_exits_2(tmp_path, capsys):
    assert main(["mc-clt", "--config", _cfg(tmp_path, bogus=1), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_bad_arguments_exit_2(tmp_path, capsys):
    assert main(["window", "--nope"]) == 2
    assert main(["window", "--check-l", "9..1", "--out", str(tmp_path)]) == 2
    assert main(["mc-clt", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert main(["mc-clt", "--config", _cfg(tmp_path, R=10), "--out", str(tmp_path)]) == 2


def test_mc_clt_deterministic_and_seed_recorded(tmp_path):
    cfg = _cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc-clt", "--config", cfg, "--seed", "77", "--out", str(a)]) == 0
    assert main(["mc-clt", "--config", cfg, "--seed", "77", "--out", str(b)]) == 0
    ma, mb = _manifest(a), _manifest(b)
    assert ma["seed"] == 77 and ma["parameters"]["seed"] == 77
    assert ma["outputs"] == mb["outputs"] and ma["outputs"]
    for name in ma["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    main(["mc-clt", "--config", cfg, "--out", str(c)])
    name = ma["outputs"][0]
    assert (c / name).read_bytes() != (a / name).read_bytes()


def test_diagram_command(tmp_path, capsys):
    assert main(["diagram", "--rows", "2,2,2", "--list", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "diagrams.json").read_text())
    assert data["counts"]["total"] == 15 and data["counts"]["non_flat"] == 8
    assert len(data["diagrams"]) == 15


def test_synth_then_bispec(tmp_path, capsys):
    s = tmp_path / "s"
    assert main(["synth", "--config", _cfg(tmp_path, levels=[2, 3]), "--out", str(s)]) == 0
    assert (s / "needlets_j3.csv").exists()
    b = tmp_path / "b"
    assert main(["bispec", "--alm", str(s / "alm.csv"), "--spectrum", str(s / "spectrum.csv"),
                 "--triple", "3", "3", "3", "--out", str(b)]) == 0
    rec = json.loads((b / "bispectrum.json").read_text())
    assert rec["admissible"] and abs(rec["I_hat"]) < 6


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "needlet_bispectrum", "diagram", "--rows", "1,1",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["total"] == 1
