"""Command-line entry point: ``needlet-bispec <command> [options]``.

Every command writes ``manifest.json`` into its output directory before any
computation and refreshes it with the output list when done.  Exit codes:
0 success, 1 validation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bispectrum import make_config, needlet_bispectrum, theoretical_variance
from .diagrams import DiagramTable, class_counts, classify, enumerate_diagrams
from .errors import ConfigError, InvalidArgumentError, NeedletError
from .experiments import (
    MCConfig,
    load_config,
    run_correlation_decay,
    run_null_clt,
    run_partial_sums,
    run_power,
    run_studentized,
    write_decay_report,
    write_partial_report,
    write_power_report,
)
from .field_model import (
    NonGaussianSpec,
    make_power_spectrum,
    sample_gaussian_alm,
    sample_local_ng,
)
from .io import ensure_dir, read_alm_csv, read_spectrum_csv, write_alm_csv, write_csv, write_needlet_csv, write_spectrum_csv
from .harmonics import sht_synthesize
from .needlet_frame import band_power, build_window, needlet_analyze
from .sphere_grid import build_grid, gl_grid, grid_diagnostics

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """``manifest.json`` for one command invocation."""

    def __init__(self, args, params: dict, seed):
        self.out = ensure_dir(args.out)
        self.data = {"command": args.command, "config_path": getattr(args, "config", None),
                     "parameters": params, "seed": seed, "output_dir": str(self.out),
                     "version": __version__, "started": _now(), "finished": None, "outputs": []}
        self._flush()

    def _flush(self):
        (self.out / "manifest.json").write_text(json.dumps(self.data, indent=1, sort_keys=True,
                                                           default=str))

    def finish(self, files, status="ok"):
        self.data["outputs"] = sorted(str(Path(f).relative_to(self.out)) for f in files)
        self.data["finished"] = _now()
        self.data["status"] = status
        self._flush()


def _mc_config(args, extra_keys=()) -> tuple[MCConfig, dict]:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a single JSON object")
    extra = {k: data.pop(k) for k in extra_keys if k in data}
    cfg = MCConfig.from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.workers = max(1, min(cfg.workers, args.threads)) if "workers" in data else max(1, args.threads)
    return cfg, extra


def _parse_range(text: str):
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise InvalidArgumentError(f"expected a range like 1..200, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise InvalidArgumentError(f"empty range {text!r}")
    return lo, hi


# ---------------------------------------------------------------- commands

def cmd_grid(args):
    m = Manifest(args, {"B": args.B, "j": args.j}, None)
    g = build_grid(args.B, args.j)
    diag = grid_diagnostics(g)
    p = m.out / "grid.json"
    p.write_text(json.dumps({"descriptor": g.descriptor(), "N": g.N, "diagnostics": diag},
                            indent=1, sort_keys=True))
    m.finish([p])
    print(json.dumps({"N": g.N, **diag}, sort_keys=True))
    return EXIT_OK


def cmd_window(args):
    lo, hi = _parse_range(args.check_l)
    m = Manifest(args, {"B": args.B, "check_l": args.check_l}, None)
    w = build_window(args.B)
    ls = np.arange(lo, hi + 1)
    jmax = int(math.ceil(math.log(max(hi, 1)) / math.log(args.B))) + 2
    total = sum(w.b2(ls / args.B**j) for j in range(0, jmax + 1))
    err = np.abs(total - 1.0)
    err[ls == 0] = 0.0
    p = m.out / "partition.csv"
    write_csv(p, ["l", "sum_b2", "abs_error"], [[int(l), float(s), float(e)]
                                                for l, s, e in zip(ls, total, err)])
    worst = float(err.max())
    ok = worst <= 1e-10
    m.finish([p], "ok" if ok else "failed")
    print(f"max |sum b^2 - 1| over l={lo}..{hi}: {worst:.3e} ({'ok' if ok else 'FAILED'})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_synth(args):
    cfg, extra = _mc_config(args, extra_keys=("levels",))
    levels = [int(j) for j in extra.get("levels", cfg.levels())]
    m = Manifest(args, {**cfg.to_dict(), "levels": levels}, cfg.seed)
    w = build_window(cfg.B)
    need = max(w.band_lmax(j) for j in levels)
    sp = make_power_spectrum(cfg.coefficients, max(need, cfg.lmax or 0))
    if cfg.f_nl:
        coeffs = sample_local_ng(NonGaussianSpec(cfg.f_nl, sp), cfg.seed)
    else:
        coeffs = sample_gaussian_alm(sp, cfg.seed)
    files = [m.out / "alm.csv", m.out / "spectrum.csv", m.out / "map.csv"]
    write_alm_csv(files[0], coeffs)
    write_spectrum_csv(files[1], sp)
    mg = gl_grid(2 * sp.lmax)
    vals = sht_synthesize(coeffs, mg)
    write_csv(files[2], ["theta", "phi", "weight", "value"],
              [[float(t), float(f), float(wt), float(v)]
               for t, f, wt, v in zip(mg.theta, mg.phi, mg.weights, vals)])
    for j in levels:
        g = build_grid(cfg.B, j)
        b = needlet_analyze(coeffs, w, g)
        p = m.out / f"needlets_j{j}.csv"
        write_needlet_csv(p, b, cfg.B, sp.ident)
        files.append(p)
    m.finish(files)
    print(f"wrote {len(files)} files to {m.out}")
    return EXIT_OK


def cmd_bispec(args):
    m = Manifest(args, {"alm": args.alm, "spectrum": args.spectrum, "B": args.B,
                        "triple": args.triple, "K": args.K}, None)
    coeffs = read_alm_csv(args.alm)
    sp = read_spectrum_csv(args.spectrum)
    w = build_window(args.B)
    cfg = make_config(args.B, *args.triple, K=args.K)
    bs = []
    for j in args.triple:
        g = build_grid(args.B, j)
        if w.band_lmax(j) > coeffs.lmax or w.band_lmax(j) > sp.lmax:
            raise InvalidArgumentError(f"band j={j} needs l up to {w.band_lmax(j)}")
        bs.append(needlet_analyze(coeffs, w, g, sigma_j_sq=4 * np.pi * band_power(sp, w, j) / g.N))
    var = theoretical_variance(sp, w, cfg)
    val = needlet_bispectrum(*bs, cfg, var_theory=var)
    rec = {**val.record(), "admissible": cfg.admissible, "version": __version__}
    p = m.out / "bispectrum.json"
    p.write_text(json.dumps(rec, indent=1, sort_keys=True, default=float))
    m.finish([p])
    print(json.dumps({"I": rec["I"], "I_hat": rec["I_hat"]}, default=float))
    return EXIT_OK


def cmd_mc_clt(args):
    cfg, _ = _mc_config(args)
    m = Manifest(args, cfg.to_dict(), cfg.seed)
    res = run_null_clt(cfg)
    m.finish(res.write(m.out))
    for k, s in res.summary.items():
        print(f"{k}: var={s['variance']:.4f} skew={s['skewness']:.4f} "
              f"exkurt={s['excess_kurtosis']:.4f} ks_p={res.tests[k]['ks_pvalue']:.3f}")
    return EXIT_OK


def cmd_mc_student(args):
    cfg, _ = _mc_config(args)
    m = Manifest(args, cfg.to_dict(), cfg.seed)
    a, b = run_studentized(cfg)
    m.finish(a.write(m.out) + b.write(m.out))
    print(json.dumps(a.extra["two_sample_ks"], sort_keys=True))
    return EXIT_OK


def cmd_mc_partial(args):
    cfg, extra = _mc_config(args, extra_keys=("L", "which"))
    L = int(args.L if args.L is not None else extra.get("L", 4))
    which = args.which or extra.get("which", "J1")
    m = Manifest(args, {**cfg.to_dict(), "L": L, "which": which}, cfg.seed)
    rep = run_partial_sums(cfg, L, which)
    files = write_partial_report(rep, m.out)
    m.finish(files)
    print(f"{which} L={L}: {len(rep['triples'])} triples, "
          f"max |offdiag corr| = {rep['max_abs_offdiag_corr']:.3f}")
    return EXIT_OK


def cmd_mc_power(args):
    cfg, _ = _mc_config(args)
    m = Manifest(args, cfg.to_dict(), cfg.seed)
    rep = run_power(cfg, control=not args.no_control)
    m.finish(write_power_report(rep, m.out))
    for arm, d in rep["arms"].items():
        for k, s in d["summary"].items():
            print(f"{arm} {k}: mean={s['mean']:.3f} se={s['se']:.3f} detected={s['detected']}")
    return EXIT_OK


def cmd_decay(args):
    cfg, extra = _mc_config(args, extra_keys=("js", "theta0", "mc_level"))
    js = tuple(int(j) for j in extra.get("js", (3, 4, 5, 6)))
    theta0 = float(extra.get("theta0", 0.3))
    mc_level = extra.get("mc_level")
    m = Manifest(args, {**cfg.to_dict(), "js": js, "theta0": theta0, "mc_level": mc_level},
                 cfg.seed)
    rep = run_correlation_decay(cfg, js=js, theta0=theta0, mc_level=mc_level)
    m.finish(write_decay_report(rep, m.out))
    for j in js:
        print(f"j={j}: exponent={rep['exponent'][j]:.2f} corr({theta0})={rep['corr_at_theta0'][j]:.4g}")
    return EXIT_OK


def cmd_diagram(args):
    try:
        rows = tuple(int(v) for v in args.rows.split(","))
    except ValueError:
        raise InvalidArgumentError(f"rows must be comma-separated integers, got {args.rows!r}") from None
    t = DiagramTable(rows)
    m = Manifest(args, {"rows": rows}, None)
    out = {"rows": rows, "counts": class_counts(t)}
    if args.list:
        out["diagrams"] = [{"edges": d.edges, **classify(d, t)} for d in enumerate_diagrams(t)]
    p = m.out / "diagrams.json"
    p.write_text(json.dumps(out, indent=1, sort_keys=True))
    m.finish([p])
    print(json.dumps(out["counts"], sort_keys=True))
    return EXIT_OK


def cmd_validate(args):
    from .validation import run_checks

    m = Manifest(args, {"quick": args.quick}, None)
    results = run_checks(quick=args.quick)
    p = m.out / "validation.csv"
    write_csv(p, ["check", "passed", "value", "tolerance"],
              [[r.name, int(r.passed), r.value, r.tolerance] for r in results])
    ok = all(r.passed for r in results)
    m.finish([p], "ok" if ok else "failed")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (tol {r.tolerance:.1e})")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="needlet-bispec", description="Needlet bispectrum toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, config=False):
        s = sub.add_parser(name, help=help_, description=help_)
        s.set_defaults(func=fn)
        s.add_argument("--out", default=f"runs/{name}", help="output directory")
        if config:
            s.add_argument("--config", help="JSON configuration file")
            s.add_argument("--seed", type=int, help="master seed (overrides the config)")
            s.add_argument("--threads", type=int, help="cap on worker processes")
        return s

    s = add("grid", cmd_grid, "build a cubature grid and report its diagnostics")
    s.add_argument("--B", type=float, default=2.0)
    s.add_argument("--j", type=int, required=True)

    s = add("window", cmd_window, "tabulate the partition of unity of the window")
    s.add_argument("--B", type=float, default=2.0)
    s.add_argument("--check-l", default="1..200", help="multipole range lo..hi")

    add("synth", cmd_synth, "sample a field and write coefficient, map and needlet files",
        config=True)

    s = add("bispec", cmd_bispec, "evaluate one bispectrum statistic from stored coefficients")
    s.add_argument("--alm", required=True)
    s.add_argument("--spectrum", required=True)
    s.add_argument("--B", type=float, default=2.0)
    s.add_argument("--triple", type=int, nargs=3, required=True, metavar=("J1", "J2", "J3"))
    s.add_argument("--K", type=int, default=1)

    add("mc-clt", cmd_mc_clt, "Gaussian replications of the normalized statistic", config=True)
    add("mc-student", cmd_mc_student, "normalized versus studentized statistic", config=True)
    s = add("mc-partial", cmd_mc_partial, "covariances of the partial-sum processes", config=True)
    s.add_argument("--L", type=int)
    s.add_argument("--which", choices=("J1", "J2"))
    s = add("mc-power", cmd_mc_power, "detection under local non-Gaussianity", config=True)
    s.add_argument("--no-control", action="store_true", help="skip the f_nl = 0 arm")
    add("decay", cmd_decay, "correlation decay of needlet coefficients", config=True)

    s = add("diagram", cmd_diagram, "diagram counts and classification for a table")
    s.add_argument("--rows", required=True, help="row sizes, e.g. 2,2,2")
    s.add_argument("--list", action="store_true", help="include every diagram")

    s = add("validate", cmd_validate, "run the invariant suite")
    s.add_argument("--quick", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NeedletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def entry():
    sys.exit(main())
