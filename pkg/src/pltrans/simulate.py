"""Monte Carlo study for the partly linear Cox model with current status data.

Event times follow the proportional hazards model
``lambda(t | z, w) = exp(beta'z + h(w)) a(t)`` with cumulative baseline
``A(t) = exp(k0) (exp(t / 3) - 1)`` and ``h(w) = sin(w / 1.2 - 1) - k0``.
Monitoring times are standard exponential restricted to ``[0.2, 1.8]``.
With the extreme value link this is the transformation model with
``H = log A`` on the time scale, so the fitted ``beta`` estimates the hazard
regression coefficients directly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .families import LinkFamily
from .fit import FitConfig, fit
from .inference import (
    block_jackknife,
    confidence_region,
    jackknife_covariance,
    marginal_intervals,
)
from .isotonic import npmle_single_sample

__all__ = [
    "Sec9Config",
    "SimSummary",
    "BiasReport",
    "true_h",
    "true_A",
    "A_inverse",
    "gen_dataset",
    "sample_censoring",
    "sample_event_times",
    "replicate_rng",
    "run_replicate",
    "run_table1",
    "summarize",
    "bias_experiment",
    "emit_figures",
    "write_summary",
    "run_manifest",
    "K0_PRINTED",
    "k0_exact",
]

K0_PRINTED = 0.06516
CLOGLOG = LinkFamily("extreme_value")


def k0_exact() -> float:
    """``E sin(W / 1.2 - 1)`` for ``W ~ U[1, 10]``, the centering constant of h."""
    return 1.2 / 9.0 * (math.cos(1.0 / 1.2 - 1.0) - math.cos(10.0 / 1.2 - 1.0))


def true_h(w, k0=K0_PRINTED):
    return np.sin(np.asarray(w, dtype=float) / 1.2 - 1.0) - k0


def true_A(t, k0=K0_PRINTED):
    return math.exp(k0) * np.expm1(np.asarray(t, dtype=float) / 3.0)


def A_inverse(s, k0=K0_PRINTED):
    return 3.0 * np.log1p(np.asarray(s, dtype=float) * math.exp(-k0))


@dataclass(frozen=True)
class Sec9Config:
    """Design of the simulation study; defaults reproduce the published setup."""

    n: int = 1600
    reps: int = 200
    seed: int = 20050101
    beta0: tuple = (0.3, 0.25)
    k0: float = K0_PRINTED
    censor_window: tuple = (0.2, 1.8)
    m_list: tuple = (10, 40)
    level: float = 0.95
    fit_config: FitConfig = field(default_factory=FitConfig)

    def to_dict(self):
        out = asdict(self)
        out["fit_config"] = asdict(self.fit_config)
        return out


def replicate_rng(seed: int, replicate: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one replicate (``stream`` separates uses)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate), int(stream)]))


def sample_censoring(rng, size, window=(0.2, 1.8)):
    """Standard exponential draws conditioned on ``[lo, hi]``, by inversion."""
    lo, hi = window
    a, b = math.exp(-lo), math.exp(-hi)
    u = rng.uniform(size=size)
    return -np.log(a - u * (a - b))


def sample_event_times(rng, eta, k0=K0_PRINTED):
    """Event times with cumulative hazard ``A(t) exp(eta)``, by inversion."""
    eta = np.asarray(eta, dtype=float)
    s = -np.log(rng.uniform(size=eta.shape)) * np.exp(-eta)
    return A_inverse(s, k0)


def gen_dataset(config: Sec9Config, replicate: int) -> Dataset:
    """One simulated sample ``(C, Delta, Z, W)`` of size ``config.n``."""
    if replicate < 0:
        raise ValueError("replicate must be nonnegative")
    rng = replicate_rng(config.seed, replicate)
    n = config.n
    z1 = rng.uniform(0.5, 1.5, n)
    z2 = (rng.uniform(size=n) < 0.5).astype(float)
    w = rng.uniform(1.0, 10.0, n)
    z = np.column_stack([z1, z2])
    eta = z @ np.asarray(config.beta0) + true_h(w, config.k0)
    t = sample_event_times(rng, eta, config.k0)
    c = sample_censoring(rng, n, config.censor_window)
    return Dataset(c, (t <= c).astype(np.int64), z, w)


# ---------------------------------------------------------------- replicates

H_GRID = np.linspace(1.0, 10.0, 101)
T_GRID = np.linspace(0.2, 1.8, 101)
VARIANTS = ("S*", "S**")


def _jackknife_seed(config: Sec9Config, replicate: int, m: int) -> int:
    return int(replicate_rng(config.seed, replicate, 1000 + m).integers(2**62))


def run_replicate(config: Sec9Config, replicate: int) -> dict:
    """Fit one replicate and run the block jackknife for every ``m``.

    Both covariance centerings are evaluated from the same block refits.
    Returns a flat record; curve values are kept under ``"h_curve"`` and
    ``"A_curve"``.
    """
    data = gen_dataset(config, replicate)
    beta0 = np.asarray(config.beta0)
    res = fit(data, CLOGLOG, config.fit_config)
    rec = {
        "replicate": replicate,
        "beta1": float(res.beta[0]),
        "beta2": float(res.beta[1]),
        "converged": bool(res.converged),
        "outer_iters": int(res.outer_iters),
        "event_fraction": float(data.delta.mean()),
    }
    for m in config.m_list:
        jk = block_jackknife(
            data,
            CLOGLOG,
            config.fit_config,
            m,
            _jackknife_seed(config, replicate, m),
            level=config.level,
            full_fit=res,
        )
        rec[f"m{m}_reliable"] = jk.reliable
        for variant in VARIANTS:
            center = jk.beta_bar if variant == "S*" else jk.beta_hat
            S = jackknife_covariance(jk.betas, jk.k, center)
            jv = replace(jk, S_star=S, variant=variant)
            region = confidence_region(jv)
            ci = marginal_intervals(jv)
            tag = f"m{m}_{variant}"
            rec[f"{tag}_stat"] = region.statistic(beta0)
            rec[f"{tag}_joint"] = bool(region.contains(beta0))
            for i in range(2):
                rec[f"{tag}_cover{i + 1}"] = bool(ci[i, 0] <= beta0[i] <= ci[i, 1])
    rec["h_curve"] = res.params.h(H_GRID).tolist()
    rec["A_curve"] = np.exp(res.params.H(T_GRID)).tolist()
    return rec


def _failed_record(replicate: int, err: Exception) -> dict:
    return {"replicate": replicate, "failed": f"{type(err).__name__}: {err}"}


def _safe_replicate(args):
    config, r = args
    try:
        return run_replicate(config, r)
    except (ArithmeticError, ValueError) as err:
        return _failed_record(r, err)


_REPLICATE_MODULES = ("data.py", "families.py", "splines.py", "isotonic.py", "fit.py", "inference.py", "simulate.py")


def source_digest() -> str:
    """Hash of the modules a replicate depends on; keys cached results."""
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in _REPLICATE_MODULES:
        p = here / name
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _cache_path(cache_dir, config: Sec9Config, replicate: int) -> Path:
    key = json.dumps(config.to_dict(), sort_keys=True, default=str)
    tag = hashlib.sha256((key + source_digest()).encode()).hexdigest()[:20]
    return Path(cache_dir) / f"sec9-{tag}" / f"rep{replicate:05d}.json"


# ---------------------------------------------------------------- summaries


@dataclass
class SimSummary:
    """Aggregates over replicates.

    ``sd`` is ``None`` when fewer than two replicates succeeded.  Coverage
    is keyed by ``(variant, m)`` with entries ``beta1``, ``beta2`` and
    ``joint``.
    """

    config: Sec9Config
    n_ok: int
    n_failed: int
    mean: np.ndarray
    sd: np.ndarray | None
    coverage: dict
    replicates: list
    k0_recomputed: float
    elapsed: float = 0.0

    def table_rows(self) -> list[dict]:
        rows = []
        for i, name in enumerate(("beta1", "beta2")):
            row = {
                "n": self.config.n,
                "parameter": name,
                "true": self.config.beta0[i],
                "mean": self.mean[i],
                "sd": None if self.sd is None else self.sd[i],
            }
            for (variant, m), cov in sorted(self.coverage.items()):
                row[f"coverage_m{m}_{variant}"] = cov[name]
            rows.append(row)
        row = {"n": self.config.n, "parameter": "joint", "true": None, "mean": None, "sd": None}
        for (variant, m), cov in sorted(self.coverage.items()):
            row[f"coverage_m{m}_{variant}"] = cov["joint"]
        rows.append(row)
        return rows


def summarize(config: Sec9Config, records: list, elapsed: float = 0.0) -> SimSummary:
    """Aggregate replicate records (order independent)."""
    records = sorted(records, key=lambda r: r["replicate"])
    ok = [r for r in records if "failed" not in r]
    if not ok:
        raise RuntimeError("every replicate failed")
    B = np.array([[r["beta1"], r["beta2"]] for r in ok])
    sd = B.std(axis=0, ddof=1) if len(ok) > 1 else None
    coverage = {}
    for m in config.m_list:
        for variant in VARIANTS:
            tag = f"m{m}_{variant}"
            coverage[(variant, m)] = {
                "beta1": float(np.mean([r[f"{tag}_cover1"] for r in ok])),
                "beta2": float(np.mean([r[f"{tag}_cover2"] for r in ok])),
                "joint": float(np.mean([r[f"{tag}_joint"] for r in ok])),
            }
    return SimSummary(
        config=config,
        n_ok=len(ok),
        n_failed=len(records) - len(ok),
        mean=B.mean(axis=0),
        sd=sd,
        coverage=coverage,
        replicates=records,
        k0_recomputed=k0_exact(),
        elapsed=elapsed,
    )


def run_table1(config: Sec9Config, workers: int = 1, cache_dir=None) -> SimSummary:
    """Run ``config.reps`` replicates and aggregate them.

    Parameters
    ----------
    config : Sec9Config
    workers : int
        Worker processes; results do not depend on this.
    cache_dir : path, optional
        Replicate records are stored there, keyed by the configuration and
        the package sources, and reused on later calls.
    """
    t0 = time.perf_counter()
    records = {}
    todo = []
    for r in range(config.reps):
        if cache_dir is not None:
            path = _cache_path(cache_dir, config, r)
            if path.exists():
                records[r] = json.loads(path.read_text())
                continue
        todo.append(r)
    jobs = [(config, r) for r in todo]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_safe_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        fresh = [_safe_replicate(j) for j in jobs]
    for rec in fresh:
        records[rec["replicate"]] = rec
        if cache_dir is not None:
            path = _cache_path(cache_dir, config, rec["replicate"])
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(rec))
    return summarize(config, list(records.values()), time.perf_counter() - t0)


# ---------------------------------------------------------------- boundary bias


@dataclass(frozen=True)
class BiasReport:
    """Endpoint behaviour of the single-sample NPMLE.

    ``freq[eps]`` is the fraction of replicates with
    ``G_hat(V_(1)) <= G0(l_v) - eps``.
    """

    n: int
    reps: int
    G0_lower: float
    G0_upper: float
    mean_lower: float
    mean_upper: float
    freq: dict
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)


def bias_experiment(n: int, reps: int, seed: int = 0, eps=(0.05, 0.10)) -> BiasReport:
    """Boundary bias of the current status NPMLE with ``U ~ U[0, 2]`` and ``V ~ U[0.5, 1.5]``.

    Records before the first ``delta = 1`` and after the last ``delta = 0``
    are dropped, so the first retained record has ``delta = 1`` and the last
    has ``delta = 0``; ``V_(1)`` and ``V_(n)`` refer to the retained sample.
    """
    if n < 100:
        raise ValueError("bias_experiment needs n >= 100")
    lo_v, hi_v = 0.5, 1.5
    lower = np.empty(reps)
    upper = np.empty(reps)
    for r in range(reps):
        rng = replicate_rng(seed, r, 7)
        u = rng.uniform(0.0, 2.0, n)
        v = np.sort(rng.uniform(lo_v, hi_v, n))
        delta = (u <= v).astype(float)
        ones = np.flatnonzero(delta == 1)
        zeros = np.flatnonzero(delta == 0)
        g = npmle_single_sample(delta[ones[0] : zeros[-1] + 1])
        lower[r] = g[0]
        upper[r] = g[-1]
    G0l, G0u = lo_v / 2.0, hi_v / 2.0
    return BiasReport(
        n=n,
        reps=reps,
        G0_lower=G0l,
        G0_upper=G0u,
        mean_lower=float(lower.mean()),
        mean_upper=float(upper.mean()),
        freq={e: float(np.mean(lower <= G0l - e)) for e in eps},
        lower=lower,
        upper=upper,
    )


# ---------------------------------------------------------------- outputs


def _write_rows(path: Path, rows: list[dict]) -> None:
    keys = list(rows[0])
    for row in rows[1:]:
        keys += [k for k in row if k not in keys]
    with path.open("w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=keys)
        out.writeheader()
        for row in rows:
            out.writerow({k: _fmt(row.get(k)) for k in keys})


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return f"{x:.17g}"
    return x


def write_summary(summary: SimSummary, out_dir) -> None:
    """table1.csv and replicates.csv (curves excluded)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "table1.csv", summary.table_rows())
    flat = [{k: v for k, v in r.items() if not k.endswith("_curve")} for r in summary.replicates]
    _write_rows(out / "replicates.csv", flat)


def _band_rows(grid, curves, truth, name):
    curves = np.asarray(curves)
    mean = curves.mean(axis=0)
    sd = curves.std(axis=0, ddof=1) if curves.shape[0] > 1 else np.zeros_like(mean)
    lo, hi = np.percentile(curves, [2.5, 97.5], axis=0)
    return [
        {
            name: grid[i],
            "true": truth[i],
            "mean": mean[i],
            "p2.5": lo[i],
            "p97.5": hi[i],
            "mean_minus_2sd": mean[i] - 2 * sd[i],
            "mean_plus_2sd": mean[i] + 2 * sd[i],
        }
        for i in range(grid.size)
    ]


def emit_figures(summary: SimSummary, out_dir, bins: int = 20) -> list[Path]:
    """Plot data as CSV: estimate histograms, the estimate scatter, and bands for h and A.

    The transformation is reported on the cumulative hazard scale,
    ``A_hat(t) = exp(H_hat(t))``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = [r for r in summary.replicates if "failed" not in r]
    B = np.array([[r["beta1"], r["beta2"]] for r in ok])
    written = []
    for i in range(2):
        counts, edges = np.histogram(B[:, i], bins=bins)
        rows = [
            {"left": edges[j], "right": edges[j + 1], "count": int(counts[j])}
            for j in range(bins)
        ]
        path = out / f"hist_beta{i + 1}.csv"
        _write_rows(path, rows)
        written.append(path)
    path = out / "scatter_beta.csv"
    _write_rows(path, [{"beta1": b[0], "beta2": b[1]} for b in B])
    written.append(path)
    k0 = summary.config.k0
    path = out / "h_band.csv"
    _write_rows(path, _band_rows(H_GRID, [r["h_curve"] for r in ok], true_h(H_GRID, k0), "w"))
    written.append(path)
    path = out / "A_band.csv"
    _write_rows(path, _band_rows(T_GRID, [r["A_curve"] for r in ok], true_A(T_GRID, k0), "t"))
    written.append(path)
    return written


def run_manifest(summary: SimSummary) -> dict:
    from . import __version__

    return {
        "config": summary.config.to_dict(),
        "n_ok": summary.n_ok,
        "n_failed": summary.n_failed,
        "k0_printed": K0_PRINTED,
        "k0_recomputed": summary.k0_recomputed,
        "elapsed_seconds": summary.elapsed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
