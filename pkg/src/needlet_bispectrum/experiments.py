"""Seeded Monte Carlo campaigns for the bispectrum statistics.

Replication ``r`` of a campaign with master seed ``s`` draws its field from
``derive_seed(s, r)``; results depend only on that seed, so any subset of
replications reproduces exactly when run alone.  Replications are processed
in chunks and folded in replication order.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .bispectrum import (
    accumulate,
    make_config,
    partial_sum_J1,
    partial_sum_J2,
    theoretical_variance,
    triangle_offsets,
)
from .errors import ConfigError, InvalidArgumentError
from .field_model import (
    NonGaussianSpec,
    derive_seed,
    expected_needlet_bispectrum,
    gaussian_alm_array,
    local_ng_from_gaussian,
    make_power_spectrum,
)
from .io import ensure_dir, write_csv, write_jsonl
from .needlet_frame import band_power, build_window, coefficient_correlation, needlet_analyze_array
from .sphere_grid import angle_between, build_grid, gl_grid


@dataclass
class MCConfig:
    """Campaign parameters (JSON round-trippable; unknown keys are rejected)."""

    B: float = 2.0
    alpha: int | None = 3
    d: list | None = None
    lmax: int | None = None
    triples: list = field(default_factory=lambda: [[4, 4, 4]])
    K: int = 1
    R: int = 1000
    seed: int = 20240601
    f_nl: float = 0.0
    work_grid_factor: int = 3
    chunk: int = 250
    workers: int = 1

    def __post_init__(self):
        self.triples = [tuple(int(v) for v in t) for t in self.triples]
        if self.R < 100:
            raise ConfigError(f"R={self.R} below the minimum of 100 replications")
        if self.B <= 1:
            raise ConfigError("B must exceed 1")
        if self.d is None and self.alpha is None:
            raise ConfigError("give either 'alpha' or 'd'")
        if self.work_grid_factor < 2:
            raise ConfigError("work_grid_factor must be >= 2")
        for t in self.triples:
            if len(t) != 3 or not (0 <= t[0] <= t[1] <= t[2]):
                raise ConfigError(f"triple {t} must satisfy 0 <= j1 <= j2 <= j3")

    @classmethod
    def from_dict(cls, data: dict) -> "MCConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(f"unknown configuration key {key!r}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["triples"] = [list(t) for t in self.triples]
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def coefficients(self):
        if self.d is not None:
            return list(self.d)
        return [0.0] * int(self.alpha) + [1.0]

    def levels(self):
        return sorted({j for t in self.triples for j in t})

    def spectrum(self):
        w = build_window(self.B)
        need = max(w.band_lmax(j) for j in self.levels())
        lmax = self.lmax if self.lmax is not None else need
        if lmax < need:
            raise ConfigError(f"lmax={lmax} does not cover band l={need}")
        return make_power_spectrum(self.coefficients, lmax)


def summarize(x) -> dict:
    """Moments with standard errors for a 1-d sample."""
    x = np.asarray(x, dtype=float)
    n = x.size
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1))
    c = x - mean
    m4 = float(np.mean(c**4))
    return {
        "n": n,
        "mean": mean,
        "se_mean": math.sqrt(var / n),
        "variance": var,
        "se_variance": math.sqrt(max(m4 - var**2, 0.0) / n),
        "skewness": float(stats.skew(x, bias=False)),
        "se_skewness": math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3))),
        "excess_kurtosis": float(stats.kurtosis(x, fisher=True, bias=False)),
        "se_kurtosis": math.sqrt(24.0 * n * (n - 1) ** 2 / ((n - 3) * (n - 2) * (n + 3) * (n + 5))),
    }


def normality(x) -> dict:
    res = stats.kstest(np.asarray(x, dtype=float), "norm")
    return {"ks_statistic": float(res.statistic), "ks_pvalue": float(res.pvalue)}


@dataclass
class MCResult:
    """Per-replication values of one or more statistics with their summaries."""

    name: str
    config: dict
    config_hash: str
    values: dict
    summary: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: str = __version__

    def recompute(self):
        self.summary = {k: summarize(v) for k, v in self.values.items()}
        self.tests = {k: normality(v) for k, v in self.values.items()}
        return self

    def header(self) -> dict:
        return {"name": self.name, "config_hash": self.config_hash, "version": self.version,
                "seed_derivation": "SeedSequence(master, spawn_key=(r,)) -> uint64 -> Philox key",
                "config": self.config}

    def write(self, outdir) -> list:
        out = ensure_dir(outdir)
        keys = list(self.values)
        R = len(self.values[keys[0]]) if keys else 0
        master = self.config.get("seed", 0)
        recs = [self.header()]
        for r in range(R):
            rec = {"replication": r, "seed": derive_seed(master, r)}
            rec.update({k: float(self.values[k][r]) for k in keys})
            recs.append(rec)
        files = []
        p = out / f"{self.name}_replications.jsonl"
        write_jsonl(p, recs)
        files.append(p)
        p = out / f"{self.name}_summary.csv"
        cols = ["n", "mean", "se_mean", "variance", "se_variance", "skewness", "se_skewness",
                "excess_kurtosis", "se_kurtosis"]
        rows = [[k] + [self.summary[k][c] for c in cols]
                + [self.tests[k]["ks_statistic"], self.tests[k]["ks_pvalue"]] for k in keys]
        write_csv(p, ["statistic"] + cols + ["ks_statistic", "ks_pvalue", "config_hash", "version"],
                  [row + [self.config_hash, self.version] for row in rows])
        files.append(p)
        p = out / f"{self.name}_qq.csv"
        probs = (np.arange(1, 100) / 100.0)
        qrows = [[pp, stats.norm.ppf(pp)] + [float(np.quantile(self.values[k], pp)) for k in keys]
                 for pp in probs]
        write_csv(p, ["prob", "normal_quantile"] + keys, qrows)
        files.append(p)
        if self.extra:
            p = out / f"{self.name}_extra.json"
            p.write_text(json.dumps({"config_hash": self.config_hash, "version": self.version,
                                     **self.extra}, sort_keys=True, indent=1, default=float))
            files.append(p)
        return files


# ------------------------------------------------------------------ engine

def _key(t):
    return "I_%d_%d_%d" % tuple(t)


class _Context:
    """Derived state shared by all chunks of one campaign."""

    def __init__(self, cfg: MCConfig):
        self.cfg = cfg
        self.window = build_window(cfg.B)
        self.spectrum = cfg.spectrum()
        self.grids = {j: build_grid(cfg.B, j) for j in cfg.levels()}
        self.sigma_sq = {j: 4 * np.pi * band_power(self.spectrum, self.window, j) / g.N
                         for j, g in self.grids.items()}
        self.configs = {t: make_config(cfg.B, *t, K=cfg.K) for t in cfg.triples}
        self.var = {t: theoretical_variance(self.spectrum, self.window, c)
                    for t, c in self.configs.items()}
        self.ng = NonGaussianSpec(cfg.f_nl, self.spectrum) if cfg.f_nl else None
        if self.ng is not None:
            self.work_grid = gl_grid(cfg.work_grid_factor * self.spectrum.lmax)


_CTX_CACHE: dict = {}


def _context(cfg: MCConfig) -> _Context:
    h = cfg.config_hash()
    if h not in _CTX_CACHE:
        _CTX_CACHE.clear()
        _CTX_CACHE[h] = _Context(cfg)
    return _CTX_CACHE[h]


def _run_chunk(args):
    cfg_dict, start, stop, studentize, scale = args
    cfg = MCConfig.from_dict(cfg_dict)
    ctx = _context(cfg)
    seeds = [derive_seed(cfg.seed, r) for r in range(start, stop)]
    alm = gaussian_alm_array(ctx.spectrum, seeds)
    if ctx.ng is not None:
        alm = local_ng_from_gaussian(alm, ctx.ng, ctx.work_grid)
    if scale != 1.0:
        alm = alm * scale
    beta = {j: needlet_analyze_array(alm, ctx.window, g) for j, g in ctx.grids.items()}
    out = {}
    for t, c in ctx.configs.items():
        bh = [beta[j] / math.sqrt(ctx.sigma_sq[j]) for j in t]
        out[_key(t)] = accumulate(*bh, c) / math.sqrt(ctx.var[t])
    if studentize:
        s2 = {j: np.mean(b**2, axis=-1) for j, b in beta.items()}
        for j in beta:
            out["sigma_ratio_%d" % j] = s2[j] / ctx.sigma_sq[j]
        for t, c in ctx.configs.items():
            bt = [beta[j] / np.sqrt(s2[j])[:, None] for j in t]
            out["Itilde_%d_%d_%d" % t] = accumulate(*bt, c) / math.sqrt(ctx.var[t])
    return out


def simulate(cfg: MCConfig, studentize: bool = False, start: int = 0, stop: int | None = None,
             scale: float = 1.0) -> dict:
    """Normalized statistics for replications ``start..stop-1`` (default all)."""
    stop = cfg.R if stop is None else stop
    if not 0 <= start < stop:
        raise InvalidArgumentError("empty replication range")
    for t in cfg.triples:
        c = make_config(cfg.B, *t, K=cfg.K)
        if not c.admissible:
            raise InvalidArgumentError(f"triple {t} is not admissible for B={cfg.B}, K={cfg.K}")
    bounds = list(range(start, stop, cfg.chunk)) + [stop]
    jobs = [(cfg.to_dict(), a, b, studentize, scale) for a, b in zip(bounds[:-1], bounds[1:])]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _result(name, cfg, values, extra=None):
    return MCResult(name, cfg.to_dict(), cfg.config_hash(), values, extra=extra or {}).recompute()


def run_null_clt(cfg: MCConfig) -> MCResult:
    """Gaussian replications of the normalized statistic for every triple."""
    if cfg.f_nl != 0:
        raise InvalidArgumentError("null campaign requires f_nl = 0")
    vals = simulate(cfg)
    ctx = _context(cfg)
    extra = {"var_theory": {_key(t): v for t, v in ctx.var.items()}}
    return _result("clt", cfg, vals, extra)


def run_studentized(cfg: MCConfig):
    """Normalized and studentized statistics side by side.

    Returns ``(result_hat, result_tilde)``; both carry the two-sample KS test
    and the distribution of ``sigma_tilde^2 / sigma^2 - 1`` per level.
    """
    if cfg.f_nl != 0:
        raise InvalidArgumentError("studentization campaign requires f_nl = 0")
    vals = simulate(cfg, studentize=True)
    hat = {_key(t): vals[_key(t)] for t in cfg.triples}
    tilde = {"Itilde_%d_%d_%d" % t: vals["Itilde_%d_%d_%d" % t] for t in cfg.triples}
    diag = {"two_sample_ks": {}, "sigma_ratio": {}}
    for t in cfg.triples:
        res = stats.ks_2samp(hat[_key(t)], tilde["Itilde_%d_%d_%d" % t])
        diag["two_sample_ks"][_key(t)] = {"statistic": float(res.statistic),
                                          "pvalue": float(res.pvalue)}
    for j in cfg.levels():
        dev = np.abs(vals["sigma_ratio_%d" % j] - 1.0)
        diag["sigma_ratio"][str(j)] = {"p99_abs_dev": float(np.quantile(dev, 0.99)),
                                       "mean_ratio": float(np.mean(vals["sigma_ratio_%d" % j])),
                                       "sd_ratio": float(np.std(vals["sigma_ratio_%d" % j], ddof=1))}
    a = _result("studentized_hat", cfg, hat, diag)
    b = _result("studentized_tilde", cfg, tilde, diag)
    a.extra["sigma_ratio_values"] = {j: vals["sigma_ratio_%d" % j].tolist() for j in cfg.levels()}
    return a, b


# ------------------------------------------------------------ partial sums

def j1_triples(L: int, K: int):
    return [(j1, j1 + K + m, j1 + K + m) for j1 in range(1, L + 1) for m in range(L)]


def j2_triples(L: int, K: int, B: float):
    return [(j, j + K + m1, j + 2 * K + m1 + m2)
            for j in range(1, L + 1) for m1, m2 in triangle_offsets(B, K)]


def run_partial_sums(cfg: MCConfig, L: int, which: str = "J1") -> dict:
    """Empirical covariance of the partial-sum processes on the grid ``r = k / L``.

    ``which="J1"`` uses triples ``(j1, j1+K+m, j1+K+m)``; ``which="J2"``
    uses ``(j, j+K+m1, j+2K+m1+m2)`` over the admissible offsets.
    """
    if which == "J1":
        triples = j1_triples(L, cfg.K)
    elif which == "J2":
        triples = j2_triples(L, cfg.K, cfg.B)
        if not triples:
            raise InvalidArgumentError(f"no admissible offsets for B={cfg.B}, K={cfg.K}")
    else:
        raise InvalidArgumentError("which must be 'J1' or 'J2'")
    sub = MCConfig.from_dict({**cfg.to_dict(), "triples": [list(t) for t in triples]})
    vals = simulate(sub)
    rs = [k / L for k in range(0, L + 1)]
    if which == "J1":
        table = {(t[0], t[1] - t[0] - cfg.K): vals[_key(t)] for t in triples}
        pts = [(r1, r2) for r1 in rs for r2 in rs]
        J = {p: np.asarray(partial_sum_J1(table, L, p[0], p[1], cfg.K)) * np.ones(cfg.R)
             for p in pts}

        def template(p, q):
            f = math.floor
            return (min(f(L * p[0] + 1e-12), f(L * q[0] + 1e-12))
                    * min(f(L * p[1] + 1e-12), f(L * q[1] + 1e-12)) / L**2)
        templates = {"finite_L": template}
    else:
        table = {(t[0], t[1] - t[0] - cfg.K, t[2] - t[1] - cfg.K): vals[_key(t)] for t in triples}
        pts = [(r,) for r in rs]
        J = {p: np.asarray(partial_sum_J2(table, L, p[0], cfg.K, cfg.B)) * np.ones(cfg.R)
             for p in pts}

        def t_minus(p, q):
            return (min(math.floor(L * p[0] + 1e-12), math.floor(L * q[0] + 1e-12)) - 1) / L

        def t_plain(p, q):
            return min(math.floor(L * p[0] + 1e-12), math.floor(L * q[0] + 1e-12)) / L
        templates = {"finite_L_minus_one": t_minus, "finite_L": t_plain}
    rows = []
    cov = {}
    for i, p in enumerate(pts):
        for q in pts[i:]:
            prod = J[p] * J[q]
            m = float(np.mean(prod))
            se = float(np.std(prod, ddof=1) / math.sqrt(cfg.R))
            cov[(p, q)] = (m, se)
            rows.append(list(p) + list(q) + [m, se] + [fn(p, q) for fn in templates.values()])
    corr = np.corrcoef(np.stack([vals[_key(t)] for t in triples]))
    off = corr[~np.eye(len(triples), dtype=bool)]
    return {"which": which, "L": L, "triples": triples, "points": pts, "cov": cov, "rows": rows,
            "template_names": list(templates), "J": J, "values": vals,
            "max_abs_offdiag_corr": float(np.max(np.abs(off))) if off.size else 0.0,
            "config_hash": sub.config_hash(), "version": __version__}


def write_partial_report(rep: dict, outdir):
    out = ensure_dir(outdir)
    dim = len(rep["points"][0])
    names = (["r1", "r2", "s1", "s2"] if dim == 2 else ["r", "s"])
    p = out / f"partial_{rep['which']}_cov.csv"
    write_csv(p, names + ["empirical", "se"] + rep["template_names"], rep["rows"])
    return [p]


# ------------------------------------------------------------------- power

def calibrate_fnl(cfg: MCConfig, triple, target: float = 1.0) -> float:
    """``f_nl`` giving ``|E I_hat| = target`` at ``triple`` to leading order."""
    ctx = _context(MCConfig.from_dict({**cfg.to_dict(), "f_nl": 0.0}))
    c = make_config(cfg.B, *triple, K=cfg.K)
    e1 = expected_needlet_bispectrum(ctx.spectrum, 1.0, ctx.window, *triple, cfg=c)
    v = theoretical_variance(ctx.spectrum, ctx.window, c)
    return float(target * math.sqrt(v) / abs(e1))


def run_power(cfg: MCConfig, control: bool = True) -> dict:
    """Mean normalized statistic under the local model, against predictions.

    With ``control=True`` the same seeds are also run at ``f_nl = 0``.
    """
    if cfg.f_nl == 0:
        raise InvalidArgumentError("power campaign requires f_nl != 0")
    arms = {"signal": cfg}
    if control:
        arms["control"] = MCConfig.from_dict({**cfg.to_dict(), "f_nl": 0.0})
    report = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "version": __version__,
              "arms": {}}
    base = _context(arms.get("control", MCConfig.from_dict({**cfg.to_dict(), "f_nl": 0.0})))
    preds = {}
    for t in cfg.triples:
        c = make_config(cfg.B, *t, K=cfg.K)
        e = expected_needlet_bispectrum(base.spectrum, cfg.f_nl, base.window, *t, cfg=c)
        preds[_key(t)] = e / math.sqrt(base.var[t])
    for name, acfg in arms.items():
        vals = simulate(acfg)
        arm = {}
        for t in cfg.triples:
            x = vals[_key(t)]
            s = summarize(x)
            arm[_key(t)] = {"mean": s["mean"], "se": s["se_mean"], "variance": s["variance"],
                            "detected": bool(abs(s["mean"]) > 3 * s["se_mean"]),
                            "predicted_mean": preds[_key(t)] if name == "signal" else 0.0}
        report["arms"][name] = {"summary": arm, "values": {k: v.tolist() for k, v in vals.items()}}
    return report


def write_power_report(rep: dict, outdir):
    out = ensure_dir(outdir)
    rows = []
    for arm, d in rep["arms"].items():
        for k, s in d["summary"].items():
            rows.append([arm, k, s["mean"], s["se"], s["variance"], int(s["detected"]),
                         s["predicted_mean"], rep["config_hash"], rep["version"]])
    p = out / "power_summary.csv"
    write_csv(p, ["arm", "statistic", "mean", "se", "variance", "detected", "predicted_mean",
                  "config_hash", "version"], rows)
    return [p]


# ------------------------------------------------------------------- decay

def fit_decay_exponent(theta, corr, scale: float) -> float:
    """Exponent ``M`` of ``|corr| ~ (1 + scale * theta)^-M``.

    Least squares on the log of the non-increasing upper envelope
    ``max_{t >= theta} |corr(t)|`` so that oscillation zeros do not bias
    the slope.
    """
    c = np.abs(np.asarray(corr, dtype=float))
    env = np.maximum.accumulate(c[::-1])[::-1]
    keep = env > 0
    x = np.log1p(scale * np.asarray(theta)[keep])
    y = np.log(env[keep])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def run_correlation_decay(cfg: MCConfig, js=(3, 4, 5, 6), theta0: float = 0.3,
                          n_theta: int = 2000, mc_level: int | None = None,
                          mc_pairs: int = 20) -> dict:
    """Analytic correlation curves, fitted exponents and an MC spot check."""
    w = build_window(cfg.B)
    lmax = max(w.band_lmax(j) for j in js)
    sp = make_power_spectrum(cfg.coefficients, max(lmax, cfg.lmax or 0))
    curves, exps, at0 = {}, {}, {}
    for j in js:
        th = np.linspace(cfg.B**-j, np.pi / 2, n_theta)
        c = coefficient_correlation(sp, w, j, th)
        curves[j] = (th, c)
        exps[j] = fit_decay_exponent(th, c, cfg.B**j)
        at0[j] = float(coefficient_correlation(sp, w, j, theta0))
    rep = {"config_hash": cfg.config_hash(), "version": __version__, "theta0": theta0,
           "exponent": exps, "corr_at_theta0": at0, "curves": curves,
           "corr_at_zero": {j: float(coefficient_correlation(sp, w, j, 0.0)) for j in js}}
    if mc_level is not None:
        g = build_grid(cfg.B, mc_level)
        rng = np.random.default_rng(derive_seed(cfg.seed, 10**9))
        vec = g.unit_vectors()
        a = rng.integers(0, g.N, size=mc_pairs)
        d_target = rng.uniform(0, 6.0 / cfg.B**mc_level, size=mc_pairs)
        b = np.array([int(np.argmin(np.abs(angle_between(vec, vec[ai]) - dt)))
                      for ai, dt in zip(a, d_target)])
        spm = make_power_spectrum(cfg.coefficients, w.band_lmax(mc_level))
        R = cfg.R
        beta = []
        for s0 in range(0, R, cfg.chunk):
            alm = gaussian_alm_array(spm, [derive_seed(cfg.seed, r) for r in range(s0, min(R, s0 + cfg.chunk))])
            beta.append(needlet_analyze_array(alm, w, g))
        beta = np.concatenate(beta)
        rows = []
        for ai, bi in zip(a, b):
            emp = float(np.corrcoef(beta[:, ai], beta[:, bi])[0, 1])
            d = float(angle_between(vec[ai], vec[bi]))
            th = float(coefficient_correlation(spm, w, mc_level, d))
            se = (1 - th**2) / math.sqrt(R)
            rows.append((int(ai), int(bi), d, emp, th, se))
        rep["mc"] = rows
    return rep


def write_decay_report(rep: dict, outdir):
    out = ensure_dir(outdir)
    rows = []
    for j, (th, c) in rep["curves"].items():
        rows.extend([j, t, v] for t, v in zip(th, c))
    p1 = out / "decay_curves.csv"
    write_csv(p1, ["j", "theta", "corr"], rows)
    p2 = out / "decay_summary.csv"
    write_csv(p2, ["j", "fitted_exponent", "corr_at_theta0", "config_hash", "version"],
              [[j, rep["exponent"][j], rep["corr_at_theta0"][j], rep["config_hash"], rep["version"]]
               for j in rep["exponent"]])
    files = [p1, p2]
    if "mc" in rep:
        p3 = out / "decay_mc_pairs.csv"
        write_csv(p3, ["k", "k_prime", "distance", "empirical", "analytic", "se"], rep["mc"])
        files.append(p3)
    return files


def load_config(path) -> MCConfig:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a single JSON object")
    return MCConfig.from_dict(data)
