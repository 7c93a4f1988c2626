"""Reproducible experiments wiring the modules together.

Every experiment takes an :class:`ExperimentConfig`, runs deterministically
from its seed list and (when ``out`` is set) writes CSV/JSON files that
carry the config hash and the seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import criticalbound
from .errors import InvalidParameterError
from .graphmetrics import (
    components,
    distortion_stats,
    inner_window_view,
    observation_set,
    sweep_k_fit,
)
from .nngraph import build_knn_graph
from .pointproc import Window, sample_binomial, sample_poisson, save_pointset
from .tilecoupling import TileParams, evaluate_tiles, rep_point_density, verify_coupling

log = logging.getLogger(__name__)

EXPERIMENTS = ("sample", "table1", "fit-sweep", "bound-search", "coupling-verify", "kc-probe")

# (n, k) -> average distortion reported for the original simulation
TABLE1_REFERENCE = {
    (500, 3): 1.727,
    (500, 4): 1.364,
    (500, 5): 1.204,
    (1000, 3): 1.660,
    (1000, 4): 1.333,
    (1000, 5): 1.172,
    (1500, 4): 1.322,
    (2000, 4): 1.285,
}

DISTORTION_COLUMNS = ["n", "k", "seed", "inner_fraction", "pairs", "avg", "max", "pct_le_2", "pct_le_2x_avg", "degenerate"]


class ConfigError(InvalidParameterError):
    """Invalid or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str = "table1"
    seed: int = 0
    seeds: list | None = None
    n: int | None = None
    lam: float = 1.0
    k: int | None = None
    k_list: list | None = None
    cases: list | None = None
    inner_fraction: float = 0.5
    restrict_inner: bool = True
    sample_pairs: int | None = None
    a: float = 0.893
    tiles: int = 20
    budget: int | None = None
    n_sources: int = 10
    threshold: float = criticalbound.SITE_PC
    k_min: int = 1
    k_max: int = 500
    a_min: float = 0.5
    a_max: float = 1.5
    coarse_step: float = 0.005
    out: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.seeds is None:
            self.seeds = [self.seed + i for i in range(10)]
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if not 0 < self.inner_fraction <= 1:
            raise ConfigError(f"inner_fraction must be in (0, 1], got {self.inner_fraction}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.as_dict().items() if k not in ("out", "threads")}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _map(cfg, fn, items):
    """Ordered map, threaded if requested; results come back in input order."""
    if cfg.threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def _outdir(cfg) -> Path | None:
    if cfg.out is None:
        return None
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _provenance(cfg) -> dict:
    return {"config_hash": cfg.config_hash(), "seeds": list(cfg.seeds)}


def _write_csv(cfg, name, header, rows) -> Path | None:
    out = _outdir(cfg)
    if out is None:
        return None
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()} seeds={','.join(map(str, cfg.seeds))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    path = out / name
    path.write_text(buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_json(cfg, name, payload) -> Path | None:
    out = _outdir(cfg)
    if out is None:
        return None
    path = out / name
    doc = {**_provenance(cfg), **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _binomial_window(n, lam):
    return Window.square(math.sqrt(n / lam))


def distortion_row(n, k, seed, cfg) -> dict:
    """One sample -> graph -> inner-window view -> distortion statistics."""
    ps = sample_binomial(_binomial_window(n, cfg.lam), n, seed)
    g = build_knn_graph(ps, k)
    inner = ps.window.centered_subwindow(cfg.inner_fraction)
    G, P, verts = inner_window_view(g, ps, inner, restrict=cfg.restrict_inner)
    row = {"n": n, "k": k, "seed": seed, "inner_fraction": cfg.inner_fraction}
    if len(verts) < 2:
        log.warning("degenerate observation set for n=%d k=%d seed=%d", n, k, seed)
        return {**row, "pairs": 0, "avg": math.nan, "max": math.nan,
                "pct_le_2": math.nan, "pct_le_2x_avg": math.nan, "degenerate": True}
    st = distortion_stats(G, P, verts, cfg.sample_pairs, seed)
    return {**row, **st.as_row(), "degenerate": False}


def run_sample(cfg: ExperimentConfig):
    """Sample one point set (Poisson when ``n`` is unset, binomial otherwise)."""
    seed = cfg.seeds[0]
    if cfg.n is None:
        side = cfg.tiles * 10 * cfg.a
        ps = sample_poisson(Window.square(side), cfg.lam, seed)
    else:
        ps = sample_binomial(_binomial_window(cfg.n, cfg.lam), cfg.n, seed)
    out = _outdir(cfg)
    if out is not None:
        save_pointset(ps, out / "points.csv")
    return ps


def run_table1(cfg: ExperimentConfig):
    """Distortion rows per ``(n, k, seed)`` plus per-``(n, k)`` summaries."""
    cases = cfg.cases
    if cases is None:
        if cfg.n is not None and (cfg.k is not None or cfg.k_list):
            cases = [(cfg.n, k) for k in (cfg.k_list or [cfg.k])]
        else:
            cases = list(TABLE1_REFERENCE)
    cases = [(int(n), int(k)) for n, k in cases]
    for n, k in cases:
        if not 1 <= k <= n - 1:
            raise ConfigError(f"invalid case n={n}, k={k}")
    jobs = [(n, k, s) for n, k in cases for s in cfg.seeds]
    rows = _map(cfg, lambda job: distortion_row(*job, cfg), jobs)
    summary = []
    for n, k in cases:
        good = [r for r in rows if r["n"] == n and r["k"] == k and not r["degenerate"]]
        avgs = np.array([r["avg"] for r in good])
        summary.append({
            "n": n,
            "k": k,
            "runs": len(good),
            "mean_avg": float(avgs.mean()) if good else math.nan,
            "std_avg": float(avgs.std(ddof=1)) if len(good) > 1 else math.nan,
            "mean_max": float(np.mean([r["max"] for r in good])) if good else math.nan,
            "mean_pct_le_2": float(np.mean([r["pct_le_2"] for r in good])) if good else math.nan,
            "mean_pct_le_2x_avg": float(np.mean([r["pct_le_2x_avg"] for r in good])) if good else math.nan,
            "reference_avg": TABLE1_REFERENCE.get((n, k), math.nan),
        })
    _write_csv(cfg, "table1.csv", DISTORTION_COLUMNS, rows)
    if summary:
        _write_csv(cfg, "table1_summary.csv", list(summary[0]), summary)
    return rows, summary


GNUPLOT_TEMPLATE = """\
set datafile separator ','
set xlabel 'k^2'
set ylabel 'average distortion'
a = {a_fit!r}
f(x) = 1 + a / x
plot '{csv}' using 2:3 skip 2 with points title 'simulated', \\
     f(x) with lines title sprintf('1 + %.2f/k^2', a)
"""


def run_fit_sweep(cfg: ExperimentConfig):
    """Average distortion per k over the seed list, and the ``1 + a/k^2`` fit."""
    ks = [int(k) for k in (cfg.k_list or range(3, 14))]
    if not ks or min(ks) < 3 or max(ks) > 13:
        raise ConfigError(f"k_list must be a nonempty subset of [3, 13], got {ks}")
    n = cfg.n or 1000
    jobs = [(k, s) for k in ks for s in cfg.seeds]
    rows = _map(cfg, lambda job: distortion_row(n, job[0], job[1], cfg), jobs)
    samples = []
    for k in ks:
        vals = [r["avg"] for r in rows if r["k"] == k and not r["degenerate"]]
        if not vals:
            log.warning("k=%d produced only degenerate observation sets; excluded from fit", k)
            continue
        samples.append((k, float(np.mean(vals))))
    fit = sweep_k_fit(samples)
    plot = [{"k": k, "k2": k * k, "avg": v, "fitted": float(fit.curve(k))} for k, v in samples]
    _write_csv(cfg, "fit_sweep.csv", ["k", "k2", "avg", "fitted"], plot)
    _write_json(cfg, "fit.json", fit.as_dict())
    out = _outdir(cfg)
    if out is not None:
        (out / "fit.gnuplot").write_text(GNUPLOT_TEMPLATE.format(a_fit=fit.a_fit, csv="fit_sweep.csv"))
    return fit, plot


def run_bound_search(cfg: ExperimentConfig):
    res = criticalbound.min_k(
        threshold=cfg.threshold,
        lam=cfg.lam,
        k_range=(cfg.k_min, cfg.k_max),
        a_range=(cfg.a_min, cfg.a_max),
        coarse_step=cfg.coarse_step,
    )
    _write_json(cfg, "bound.json", res.as_dict())
    return res


def run_coupling_verify(cfg: ExperimentConfig):
    k = cfg.k or 188
    params = TileParams(cfg.a, k, cfg.lam)
    seed = cfg.seeds[0]
    ps = sample_poisson(Window.square(cfg.tiles * params.side), cfg.lam, seed)
    g = build_knn_graph(ps, k)
    lat = evaluate_tiles(ps, params)
    report = verify_coupling(g, ps, lat, budget=cfg.budget, n_sources=cfg.n_sources, seed=seed)
    p = criticalbound.prob_At(cfg.a, k, cfg.lam).value
    extra = {
        "analytic_p": p,
        "open_sigma": math.sqrt(p * (1 - p) / lat.open.size),
        "rep_point_density": rep_point_density(lat),
        "lambda": cfg.lam,
        "points": len(ps),
        "tiles": [lat.nx, lat.ny],
    }
    _write_json(cfg, "coupling.json", {**report.as_dict(), **extra})
    out = _outdir(cfg)
    if out is not None:
        lat.save_csv(out / "lattice.csv")
    return report, extra


def run_kc_probe(cfg: ExperimentConfig):
    """Share of inner-window points in the full-graph component chosen for the window."""
    ks = [int(k) for k in (cfg.k_list or range(1, 9))]
    n = cfg.n or 1000

    def one(job):
        k, seed = job
        ps = sample_binomial(_binomial_window(n, cfg.lam), n, seed)
        inner = ps.window.centered_subwindow(cfg.inner_fraction)
        inside = int(inner.contains(ps.points).sum())
        if inside == 0:
            return k, math.nan
        verts = observation_set(ps, components(build_knn_graph(ps, k)), inner)
        return k, len(verts) / inside

    res = _map(cfg, one, [(k, s) for k in ks for s in cfg.seeds])
    rows = [{"k": k, "fraction": float(np.nanmean([f for kk, f in res if kk == k]))} for k in ks]
    _write_csv(cfg, "kc_probe.csv", ["k", "fraction"], rows)
    return rows


RUNNERS = {
    "sample": run_sample,
    "table1": run_table1,
    "fit-sweep": run_fit_sweep,
    "bound-search": run_bound_search,
    "coupling-verify": run_coupling_verify,
    "kc-probe": run_kc_probe,
}


def run(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)
