"""Monte Carlo studies: strong errors, the eps-convergence and delta sweeps, persistence.

Replicas are split into fixed-size chunks that run on a worker pool.  Since
noise is keyed by replica id and a chunk's arithmetic does not depend on which
worker runs it, reports are identical for any worker count.  Rows are emitted
in a fixed order and flushed to CSV one at a time.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .config import StudyConfig
from .ergodics import (AveragedCoupling, ContractionReport, contraction_diagnostic, estimate_invariant_mean,
                       mixing_diagnostic, ou_stationary_mean)
from .errors import GridMismatch, StepTooLarge
from .integrate import (TimeGrid, Trajectory, block_steps_for, default_initial, simulate_auxiliary, simulate_averaged,
                        simulate_path)
from .model import FieldPair, SpectralField
from .noise import AUX, RngStream
from .verify import dyadic_lags, holder_exponent_estimate, moment_sweep, random_fields, run_inequality_suite

Z95 = 1.959963984540054

CSV_COLUMNS = ("study", "eps", "delta", "p", "n_samples", "error", "ci_low", "ci_high", "seed", "wall_time_s",
               "metric", "reference")

_CONTRACTION_STREAM = 4


@dataclass(frozen=True)
class ReportRow:
    """One estimate.  ``delta`` carries the study's sweep variable (block length,
    lag or time); ``reference`` a comparison value (rate, tolerance or noise floor)."""

    study: str
    eps: float | None
    delta: float | None
    p: float | None
    n_samples: int
    error: float
    ci_low: float
    ci_high: float
    seed: int
    wall_time_s: float | None
    metric: str
    reference: float | None = None

    def __post_init__(self):
        if not (math.isnan(self.error) or self.ci_low <= self.error <= self.ci_high):
            raise ValueError(f"row violates ci_low <= error <= ci_high: {self}")

    def csv_fields(self, timings: bool) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if name == "wall_time_s" and not timings:
                v = None
            out.append(_fmt(v))
        return out

    def to_dict(self, timings: bool) -> dict[str, Any]:
        d = asdict(self)
        if not timings:
            d["wall_time_s"] = None
        return {k: (_json_float(v) if isinstance(v, float) else v) for k, v in d.items()}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_float(v: float):
    return v if math.isfinite(v) else repr(v)


@dataclass
class ErrorReport:
    rows: list[ReportRow] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    timings: bool = False

    def to_json(self) -> dict[str, Any]:
        return {"rows": [r.to_dict(self.timings) for r in self.rows], "config": self.config, "metadata": self.metadata}

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)] + [",".join(r.csv_fields(self.timings)) for r in self.rows]
        return "\n".join(lines) + "\n"


class ReportSink:
    """Collects rows, mirroring each to ``<out>/report.csv`` as soon as it exists."""

    def __init__(self, report: ErrorReport, out_dir: str | Path | None = None, echo: Callable[[str], None] | None = None):
        self.report = report
        self.echo = echo
        self._fh = None
        self._writer = None
        self.out_dir = None if out_dir is None else Path(out_dir)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.out_dir / "report.csv", "w", encoding="utf-8", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(CSV_COLUMNS)
            self._fh.flush()

    def add(self, row: ReportRow) -> None:
        self.report.rows.append(row)
        self.report.metadata.setdefault("wall_times_s", []).append(row.wall_time_s)
        if self._writer is not None:
            self._writer.writerow(row.csv_fields(self.report.timings))
            self._fh.flush()
        if self.echo is not None:
            self.echo(summary_line(row))

    def close(self, status: str = "ok", error: str | None = None) -> None:
        self.report.metadata["status"] = status
        if error is not None:
            self.report.metadata["error"] = error
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            with open(self.out_dir / "report.json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(self.report.to_json(), fh, indent=2, sort_keys=False)
                fh.write("\n")


def summary_line(row: ReportRow) -> str:
    parts = [row.study, row.metric]
    for name in ("eps", "delta", "p"):
        v = getattr(row, name)
        if v is not None:
            parts.append(f"{name}={v:g}")
    parts.append(f"n={row.n_samples}")
    parts.append(f"error={row.error:.6g} [{row.ci_low:.6g}, {row.ci_high:.6g}]")
    if row.reference is not None:
        parts.append(f"ref={row.reference:.6g}")
    return " ".join(parts)


# --- estimators -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StrongError:
    per_sample: np.ndarray
    estimate: float
    stderr: float
    ci_low: float
    ci_high: float


def mean_ci(samples: np.ndarray, nonneg: bool = True) -> tuple[float, float, float, float]:
    """(mean, ci_low, ci_high, stderr) at 95% from the replica variance."""
    x = np.asarray(samples, dtype=np.float64)
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    lo, hi = m - Z95 * se, m + Z95 * se
    if nonneg:
        lo = max(lo, 0.0)
    return m, min(lo, m), max(hi, m), se


def _slow(x) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(x, Trajectory):
        return x.slow, x.times
    return np.asarray(x), None


def strong_error(traj_a, traj_b, p_order: float = 1.0) -> StrongError:
    """E sup_t ||A - B||^{2p} over snapshot grids, per replica then pooled."""
    a, ta = _slow(traj_a)
    b, tb = _slow(traj_b)
    if a.shape != b.shape:
        raise GridMismatch(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    if ta is not None and tb is not None and not np.array_equal(ta, tb):
        raise GridMismatch("snapshot grids differ")
    d2 = np.sum(np.abs(a - b) ** 2, axis=-1)
    per = np.max(d2, axis=-1) ** p_order
    m, lo, hi, se = mean_ci(per)
    return StrongError(per, m, se, lo, hi)


def rate_reference(eps: float, p_order: float) -> float:
    """(-ln eps)^{-1/(8p)}: printed for comparison, never asserted."""
    x = -math.log(eps)
    return math.inf if x <= 0 else x ** (-1.0 / (8.0 * p_order))


# --- execution ----------------------------------------------------------------

class ReplicaPool:
    """``map`` in order; a process pool when ``workers > 1``."""

    def __init__(self, workers: int = 1):
        self.workers = int(workers)
        self._ex = ProcessPoolExecutor(self.workers) if self.workers > 1 else None

    def map(self, fn, jobs: Iterable) -> list:
        if self._ex is None:
            return [fn(j) for j in jobs]
        return list(self._ex.map(fn, jobs))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self._ex is not None:
            self._ex.shutdown()


def replica_chunks(n: int, size: int) -> list[tuple[int, ...]]:
    return [tuple(range(s, min(n, s + size))) for s in range(0, n, size)]


def common_step(cfg: StudyConfig) -> float:
    """One step for every eps so that channel-1 keys line up across runs."""
    c = cfg.grid.c_fast
    h = cfg.grid.h if cfg.grid.h is not None else min(min(1e-3, c * e) for e in cfg.eps_list)
    for e in cfg.eps_list:
        if h > c * e * (1 + 1e-12):
            raise StepTooLarge(f"grid.h={h} exceeds c_fast * eps = {c * e} at eps={e}")
    return h


def _initial_pair(n: int) -> FieldPair:
    a0 = default_initial(n)
    return FieldPair(a0, a0)


def _coupled_job(args):
    cfg, eps, h, reps = args
    p = cfg.model.with_eps(eps)
    g = cfg.grid
    tr = simulate_path(_initial_pair(g.n_modes), TimeGrid(g.t_end, h, g.stride), p, cfg.noise_spec,
                       RngStream(cfg.master_seed), reps, g.n_phys, g.c_fast)
    return tr.slow


def _averaged_job(args):
    cfg, h, reps = args
    g = cfg.grid
    rng = RngStream(cfg.master_seed)
    fbar = AveragedCoupling(cfg.model, cfg.noise_spec, cfg.ergodic, rng, g.n_phys)
    tr = simulate_averaged(default_initial(g.n_modes), TimeGrid(g.t_end, h, g.stride), cfg.model, cfg.noise_spec, rng,
                           fbar, reps, g.n_phys)
    return tr.slow


def convergence_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    """Rows of E sup_t ||A^eps - Abar||^{2p}, one per eps, with the log-rate reference."""
    h = common_step(cfg)
    chunks = replica_chunks(cfg.mc_samples, cfg.chunk_size)
    t0 = time.perf_counter()
    abar = np.concatenate(pool.map(_averaged_job, [(cfg, h, c) for c in chunks]))
    sink.report.metadata["averaged_wall_time_s"] = time.perf_counter() - t0
    for eps in cfg.eps_list:
        t0 = time.perf_counter()
        a = np.concatenate(pool.map(_coupled_job, [(cfg, eps, h, c) for c in chunks]))
        se = strong_error(a, abar, cfg.p_order)
        sink.add(ReportRow("convergence", eps, None, cfg.p_order, cfg.mc_samples, se.estimate, se.ci_low, se.ci_high,
                           cfg.master_seed, time.perf_counter() - t0, "averaging_error",
                           rate_reference(eps, cfg.p_order)))


def resolve_deltas(cfg: StudyConfig, eps: float, h: float) -> list[float]:
    """Explicit deltas, or sqrt(eps) snapped to the nearest multiple of stride * h."""
    if cfg.deltas is not None:
        return list(cfg.deltas)
    unit = cfg.grid.stride * h
    return [max(1, round(math.sqrt(eps) / unit)) * unit]


def _khasminskii_job(args):
    cfg, eps, h, deltas, reps = args
    p = cfg.model.with_eps(eps)
    g = cfg.grid
    rng = RngStream(cfg.master_seed)
    noise = cfg.noise_spec
    base = simulate_path(_initial_pair(g.n_modes), TimeGrid(g.t_end, h, g.stride), p, noise, rng, reps, g.n_phys,
                         g.c_fast)
    out = []
    for d in deltas:
        aux = simulate_auxiliary(base, d, p, noise, rng, g.n_phys)
        fast = np.sum(np.abs(base.fast - aux.b_hat) ** 2, axis=-1) ** cfg.p_order           # (R, S)
        slow = np.max(np.sum(np.abs(base.slow - aux.a_hat) ** 2, axis=-1), axis=-1) ** cfg.p_order
        out.append((fast, slow))
    return out


def khasminskii_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    """Per delta: sup_t E||B - B_hat||^{2p} and E sup_t ||A - A_hat||^{2p}."""
    h = common_step(cfg)
    n_steps = TimeGrid(cfg.grid.t_end, h).n_steps
    chunks = replica_chunks(cfg.mc_samples, cfg.chunk_size)
    for eps in cfg.eps_list:
        deltas = resolve_deltas(cfg, eps, h)
        for d in deltas:
            block_steps_for(d, h, n_steps, cfg.grid.stride)
        t0 = time.perf_counter()
        parts = pool.map(_khasminskii_job, [(cfg, eps, h, deltas, c) for c in chunks])
        wall = (time.perf_counter() - t0) / len(deltas)
        for i, d in enumerate(deltas):
            fast = np.concatenate([q[i][0] for q in parts])
            slow = np.concatenate([q[i][1] for q in parts])
            j = int(np.argmax(fast.mean(axis=0)))
            m, lo, hi, _ = mean_ci(fast[:, j])
            sink.add(ReportRow("khasminskii", eps, d, cfg.p_order, cfg.mc_samples, m, lo, hi, cfg.master_seed, wall,
                               "fast_aux_error", d ** (cfg.p_order + 1) / eps))
            m, lo, hi, _ = mean_ci(slow)
            sink.add(ReportRow("khasminskii", eps, d, cfg.p_order, cfg.mc_samples, m, lo, hi, cfg.master_seed, wall,
                               "slow_aux_error", d ** cfg.p_order + d ** (cfg.p_order + 1) / eps))


def holder_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    lags = dyadic_lags(*cfg.lag_k)
    for eps in cfg.eps_list:
        t0 = time.perf_counter()
        est = holder_exponent_estimate(cfg.p_order, eps, cfg.mc_samples, lags, cfg.model, cfg.noise_spec,
                                       RngStream(cfg.master_seed), cfg.t0, cfg.grid.n_modes, cfg.grid.h,
                                       cfg.grid.n_phys, cfg.chunk_size, pool.map)
        wall = time.perf_counter() - t0
        for lag, m, se in zip(est.lags, est.moments, est.moment_stderr):
            sink.add(ReportRow("holder", eps, float(lag), cfg.p_order, cfg.mc_samples, float(m),
                               max(float(m - Z95 * se), 0.0), float(m + Z95 * se), cfg.master_seed, wall,
                               "increment_moment", None))
        sink.add(ReportRow("holder", eps, None, cfg.p_order, cfg.mc_samples, est.slope, est.ci_low, est.ci_high,
                           cfg.master_seed, wall, "holder_slope", cfg.p_order))
        sink.report.metadata.setdefault("holder", []).append({"eps": eps, **est.to_dict()})


def moments_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    t0 = time.perf_counter()
    sweep = moment_sweep(cfg.eps_list, cfg.p_order, cfg.mc_samples, cfg.model, cfg.noise_spec,
                         RngStream(cfg.master_seed), cfg.grid.t_end, cfg.grid.n_modes, common_step(cfg),
                         cfg.grid.stride, n_phys=cfg.grid.n_phys, chunk_size=cfg.chunk_size, map_fn=pool.map)
    wall = (time.perf_counter() - t0) / len(cfg.eps_list)
    for r in sweep.rows:
        for metric, v, se in (("sup_l2_moment", r.sup_l2, r.sup_l2_se), ("sup_h1_moment", r.sup_h1, r.sup_h1_se),
                              ("int_fast_h1_moment", r.int_fast_h1, r.int_fast_h1_se)):
            sink.add(ReportRow("moments", r.eps, None, cfg.p_order, r.n_samples, v, max(v - Z95 * se, 0.0),
                               v + Z95 * se, cfg.master_seed, wall, metric, None))
    sink.report.metadata["moments"] = {"h1_ratio": sweep.h1_ratio, "flags": sweep.flags}


def contraction_triples(rng: RngStream, n: int, n_modes: int):
    gen = rng.generator(0, AUX, _CONTRACTION_STREAM)
    a = random_fields(gen, n, n_modes, band=n_modes, amplitude=0.5)
    x = random_fields(gen, n, n_modes, band=n_modes, amplitude=0.5)
    y = random_fields(gen, n, n_modes, band=n_modes, amplitude=0.5)
    return a, x, y


def run_contraction(cfg: StudyConfig, n_trials: int | None = None, t_end: float | None = None,
                    h: float | None = None) -> list[ContractionReport]:
    rng = RngStream(cfg.master_seed)
    n = cfg.trials if n_trials is None else n_trials
    a, x, y = contraction_triples(rng, n, cfg.grid.n_modes)
    h = (cfg.grid.h or 1e-3) if h is None else h
    t_end = cfg.grid.t_end if t_end is None else t_end
    return [contraction_diagnostic(SpectralField(a[i]), SpectralField(x[i]), SpectralField(y[i]), t_end, cfg.model,
                                   cfg.noise_spec, rng, h, key=i, n_phys=cfg.grid.n_phys) for i in range(n)]


CONTRACTION_TOL = 1.05


def contraction_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    t0 = time.perf_counter()
    reports = run_contraction(cfg)
    wall = (time.perf_counter() - t0) / len(reports)
    for r in reports:
        sink.add(ReportRow("contraction", None, None, None, 1, r.max_ratio, r.max_ratio, r.max_ratio,
                           cfg.master_seed, wall, "contraction_ratio", CONTRACTION_TOL))
    sink.report.metadata["passed"] = all(r.max_ratio <= CONTRACTION_TOL for r in reports)


def mixing_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    p = cfg.model
    n = cfg.grid.n_modes
    hm = cfg.ergodic.h_micro
    horizon = 5.0 / (2.0 * p.alpha)
    t_grid = np.unique(np.rint(np.linspace(0.0, horizon, 11) / hm)) * hm
    a = default_initial(n)
    x0 = SpectralField(-a.coeffs)
    t0 = time.perf_counter()
    rep = mixing_diagnostic(a, x0, t_grid, p, cfg.ergodic, cfg.noise_spec, RngStream(cfg.master_seed),
                            n_paths=cfg.mc_samples, n_phys=cfg.grid.n_phys)
    wall = (time.perf_counter() - t0) / len(t_grid)
    for t, dist, floor in zip(rep.times, rep.distance, rep.noise_floor):
        sink.add(ReportRow("mixing", None, float(t), None, cfg.mc_samples, float(dist),
                           max(float(dist - Z95 * floor), 0.0), float(dist + Z95 * floor), cfg.master_seed, wall,
                           "mixing_distance", float(floor)))


def _inequality_rows(cfg: StudyConfig, sink: ReportSink, study: str) -> bool:
    t0 = time.perf_counter()
    checks = run_inequality_suite(RngStream(cfg.master_seed), cfg.grid.n_modes)
    wall = (time.perf_counter() - t0) / len(checks)
    for c in checks:
        sink.add(ReportRow(study, None, None, None, c.n_trials, c.max_value, c.max_value, c.max_value,
                           cfg.master_seed, wall, c.name, c.tolerance))
    sink.report.metadata["checks"] = [c.to_dict() for c in checks]
    return all(c.passed for c in checks)


def inequalities_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    sink.report.metadata["passed"] = _inequality_rows(cfg, sink, "inequalities")


def selftest_study(cfg: StudyConfig, sink: ReportSink, pool: ReplicaPool) -> None:
    """Inequality battery plus a short contraction run and the linear-mode ergodic oracle."""
    ok = _inequality_rows(cfg, sink, "selftest")
    t0 = time.perf_counter()
    reports = run_contraction(cfg, n_trials=3, t_end=0.2)
    worst = max(r.max_ratio for r in reports)
    sink.add(ReportRow("selftest", None, None, None, len(reports), worst, worst, worst, cfg.master_seed,
                       time.perf_counter() - t0, "contraction_ratio", CONTRACTION_TOL))
    ok &= worst <= CONTRACTION_TOL
    z = linear_ou_zscore(cfg)
    sink.add(ReportRow("selftest", None, None, None, 1, z, z, z, cfg.master_seed, None, "linear_ou_mean_zscore", 3.0))
    ok &= z <= 3.0
    sink.report.metadata["passed"] = bool(ok)


def linear_ou_zscore(cfg: StudyConfig, a: SpectralField | None = None, replicas: int = 64) -> float:
    """Worst |estimate - closed form| / standard error over the active modes of ``a`` in linear mode.

    Real and imaginary parts are scored separately against their own standard errors.
    """
    from dataclasses import replace

    n = cfg.grid.n_modes
    p = replace(cfg.model, nonlinear=False)
    if a is None:
        a = SpectralField.from_modes({1: 1.0, 2: 0.5j, 3: -0.3, 4: 0.2 + 0.2j}, n)
    ecfg = replace(cfg.ergodic, replicas=replicas)
    stats = estimate_invariant_mean(a, ecfg, p, cfg.noise_spec, RngStream(cfg.master_seed), n_phys=cfg.grid.n_phys)
    active = a.coeffs != 0
    diff = (stats.mean_field.coeffs - ou_stationary_mean(a, p))[active]
    se = stats.mean_stderr[active]
    z = np.concatenate([np.abs(diff.real) / se.real, np.abs(diff.imag) / se.imag])
    return float(np.max(z))


STUDY_FUNCS: dict[str, Callable[[StudyConfig, ReportSink, ReplicaPool], None]] = {
    "convergence": convergence_study,
    "khasminskii": khasminskii_study,
    "holder": holder_study,
    "contraction": contraction_study,
    "mixing": mixing_study,
    "moments": moments_study,
    "inequalities": inequalities_study,
    "selftest": selftest_study,
}


def new_report(cfg: StudyConfig) -> ErrorReport:
    meta = {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "workers": cfg.workers,
    }
    return ErrorReport(config=cfg.resolved(), metadata=meta, timings=cfg.timings)


def run_study(cfg: StudyConfig, echo: Callable[[str], None] | None = None) -> ErrorReport:
    """Run ``cfg.study``; with ``cfg.out_path`` set, write report.csv (streamed) and report.json."""
    report = new_report(cfg)
    sink = ReportSink(report, cfg.out_path, echo)
    try:
        with ReplicaPool(cfg.workers) as pool:
            STUDY_FUNCS[cfg.study](cfg, sink, pool)
    except BaseException as exc:
        sink.close("aborted", f"{type(exc).__name__}: {exc}")
        raise
    sink.close()
    return report
