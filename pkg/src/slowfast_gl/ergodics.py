"""Invariant measure of the frozen fast equation and the averaged coupling.

Because f(A, B) = eta A + i kappa B is affine in B, the averaged coupling only
needs the invariant mean:  fbar(A) = eta A + i kappa m(A),  m(A) = int B mu^A(dB).
m(A) is estimated by time averages of independent frozen-fast micro paths
after a burn-in calibrated by the contraction rate 2 alpha.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ErgodicSolveFailed
from .integrate import FrozenFastStepper, simulate_frozen_fast
from .model import ModelParams, SpectralField, mode_eigenvalues
from .noise import INIT, MICRO, NoiseSpec, RngStream

Z95 = 1.959963984540054


@dataclass(frozen=True)
class ErgodicConfig:
    """Micro-solve settings.  Times are in fast (own) time units.

    ``t_average=None`` means 10 / (2 alpha).
    """

    burn_in_multiplier: float = 5.0
    t_average: float | None = None
    replicas: int = 4
    h_micro: float = 0.01
    cache_threshold: float = 0.05
    n_batches: int = 5

    def __post_init__(self):
        if self.burn_in_multiplier < 1.0:
            raise ConfigError("burn_in_multiplier must be >= 1 (burn-in of at least 1/(2 alpha))")
        if self.t_average is not None and self.t_average <= 0:
            raise ConfigError("t_average must be > 0")
        if int(self.replicas) < 1 or int(self.n_batches) < 1:
            raise ConfigError("replicas and n_batches must be >= 1")
        if not self.h_micro > 0 or not self.cache_threshold > 0:
            raise ConfigError("h_micro and cache_threshold must be > 0")

    def burn_in(self, p: ModelParams) -> float:
        return self.burn_in_multiplier / (2.0 * p.alpha)

    def averaging_time(self, p: ModelParams) -> float:
        t = 10.0 / (2.0 * p.alpha) if self.t_average is None else self.t_average
        if t < 1.0 / (2.0 * p.alpha) * (1 - 1e-12):
            raise ConfigError(f"t_average={t} shorter than the relaxation time 1/(2 alpha)={1 / (2 * p.alpha):.4g}")
        return t

    def to_dict(self) -> dict:
        return {
            "burn_in_multiplier": self.burn_in_multiplier,
            "t_average": self.t_average,
            "replicas": self.replicas,
            "h_micro": self.h_micro,
            "cache_threshold": self.cache_threshold,
            "n_batches": self.n_batches,
        }


@dataclass(frozen=True, eq=False)
class InvariantStats:
    """Pooled invariant-measure estimates for one frozen slow field.

    ``mean_stderr`` holds the standard errors of the real and imaginary parts
    of ``mean_field`` as the real and imaginary parts of a complex array.
    """

    mean_field: SpectralField
    second_moment: float
    ci_halfwidth: float
    mean_stderr: np.ndarray
    wall_time: float = field(default=0.0, compare=False)

    def __eq__(self, other):
        if not isinstance(other, InvariantStats):
            return NotImplemented
        return (self.mean_field == other.mean_field and self.second_moment == other.second_moment
                and self.ci_halfwidth == other.ci_halfwidth and np.array_equal(self.mean_stderr, other.mean_stderr))

    __hash__ = None


def ou_stationary_mean(a: np.ndarray | SpectralField, p: ModelParams) -> np.ndarray:
    """Stationary mean of the fast equation without F and G: -i kappa a_k / (eta - (i + beta) mu_k)."""
    c = a.coeffs if isinstance(a, SpectralField) else np.asarray(a)
    mu = mode_eigenvalues(c.shape[-1])
    return -1j * p.kappa * c / (p.eta - complex(p.beta, 1.0) * mu)


def linear_fbar(a: np.ndarray | SpectralField, p: ModelParams) -> np.ndarray:
    """Closed-form averaged coupling for the linear fast equation."""
    c = a.coeffs if isinstance(a, SpectralField) else np.asarray(a)
    return p.eta * c + 1j * p.kappa * ou_stationary_mean(c, p)


@dataclass
class _MicroResult:
    mean: np.ndarray            # (R, N) pooled mean
    replica_means: np.ndarray   # (R, Rm, N)
    batch_means: np.ndarray     # (R, Rm, nb, N)
    second_moment: np.ndarray   # (R,)
    init_spread: np.ndarray     # (R,) max ||X_r - X_s||


def _micro_initial(gen: np.random.Generator, n_rep: int, n_modes: int) -> np.ndarray:
    k = np.arange(1, n_modes + 1)
    xi = gen.standard_normal((n_rep, n_modes, 2))
    return 0.5 * (xi[..., 0] + 1j * xi[..., 1]) / (math.sqrt(2.0) * k)


def _micro_solve(a: np.ndarray, keys, cfg: ErgodicConfig, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                 n_phys: int | None) -> _MicroResult:
    """Batched frozen-fast micro paths for each row of ``a`` ((R, N)); keys are (replica, step) per row."""
    n_macro, n_modes = a.shape
    rm, nb = int(cfg.replicas), int(cfg.n_batches)
    h = cfg.h_micro
    n_burn = math.ceil(cfg.burn_in(p) / h - 1e-9)
    n_avg = max(nb, math.ceil(cfg.averaging_time(p) / h - 1e-9))
    n_avg += (-n_avg) % nb
    st = FrozenFastStepper(p, noise, h, n_modes, n_phys)
    width = st.conv.width
    shape = (n_burn + n_avg, rm, n_modes) + ((2,) if width == 2 else ())

    gens = [rng.generator(r, MICRO, s) for r, s in keys]
    b = np.stack([_micro_initial(rng.generator(r, INIT, s), rm, n_modes) for r, s in keys])
    diffs = b[:, :, None, :] - b[:, None, :, :]
    init_spread = np.sqrt(np.max(np.sum(np.abs(diffs) ** 2, axis=-1), axis=(1, 2)))
    xi = None if st.conv.is_zero else np.stack([g.standard_normal(shape) for g in gens], axis=1)
    frozen = a[:, None, :]

    batch_len = n_avg // nb
    batch_sums = np.zeros((n_macro, rm, nb, n_modes), dtype=np.complex128)
    sq = np.zeros((n_macro,))
    for n in range(n_burn + n_avg):
        b = st(b, frozen, None if xi is None else st.conv(xi[n]))
        j = n - n_burn
        if j >= 0:
            batch_sums[:, :, j // batch_len] += b
            sq += np.sum(b.real**2 + b.imag**2, axis=(1, 2))
    if not np.all(np.isfinite(batch_sums)):
        raise ErgodicSolveFailed("non-finite values in micro-solve")
    batch_means = batch_sums / batch_len
    replica_means = batch_means.mean(axis=2)
    return _MicroResult(replica_means.mean(axis=1), replica_means, batch_means, sq / (n_avg * rm), init_spread)


def _stderr(samples: np.ndarray, axis: int) -> np.ndarray:
    """Componentwise (re/im) standard error of the mean along ``axis``, packed as complex."""
    n = samples.shape[axis]
    if n < 2:
        return np.zeros(np.delete(samples.shape, axis), dtype=np.complex128)
    se_re = samples.real.std(axis=axis, ddof=1) / math.sqrt(n)
    se_im = samples.imag.std(axis=axis, ddof=1) / math.sqrt(n)
    return se_re + 1j * se_im


def _norm_se(se: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(se.real**2 + se.imag**2, axis=-1))


def _check_agreement(res: _MicroResult, cfg: ErgodicConfig, p: ModelParams) -> np.ndarray:
    """Raise if a micro replica disagrees with the pooled mean beyond 5x its CI; return pooled SE."""
    rm = res.replica_means.shape[1]
    if rm >= 2:
        pooled_se = _stderr(res.replica_means, axis=1)
    else:
        pooled_se = _stderr(res.batch_means[:, 0], axis=1)
    within = _norm_se(_stderr(res.batch_means, axis=2))              # (R, Rm)
    ci = Z95 * np.sqrt(within**2 + _norm_se(pooled_se)[:, None] ** 2)
    dist = np.sqrt(np.sum(np.abs(res.replica_means - res.mean[:, None, :]) ** 2, axis=-1))
    # residual memory of the initial data allowed by the contraction estimate
    memory = res.init_spread[:, None] * math.exp(-p.alpha * cfg.burn_in(p))
    bad = dist > 5.0 * ci + memory + 1e-12
    if np.any(bad):
        r, j = np.argwhere(bad)[0]
        raise ErgodicSolveFailed(
            f"micro replica {j} of row {r} deviates by {dist[r, j]:.3g} (> 5 x CI {ci[r, j]:.3g}); "
            "burn-in too short or parameters invalid"
        )
    return pooled_se


def estimate_invariant_mean(a: SpectralField, cfg: ErgodicConfig, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                            key: tuple[int, int] = (0, 0), n_phys: int | None = None) -> InvariantStats:
    """Estimate the mean and second moment of mu^A for a single frozen field ``a``."""
    t0 = time.perf_counter()
    res = _micro_solve(a.coeffs.reshape(1, -1), [key], cfg, p, noise, rng, n_phys)
    se = _check_agreement(res, cfg, p)[0]
    return InvariantStats(
        mean_field=SpectralField(res.mean[0]),
        second_moment=float(res.second_moment[0]),
        ci_halfwidth=float(Z95 * _norm_se(se)),
        mean_stderr=se,
        wall_time=time.perf_counter() - t0,
    )


def evaluate_fbar(a: SpectralField, cfg: ErgodicConfig, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                  key: tuple[int, int] = (0, 0), n_phys: int | None = None) -> SpectralField:
    """fbar(a) = eta a + i kappa m(a); kappa = 0 needs no micro-solve."""
    if p.kappa == 0.0:
        return SpectralField(p.eta * a.coeffs)
    stats = estimate_invariant_mean(a, cfg, p, noise, rng, key, n_phys)
    return SpectralField(p.eta * a.coeffs + 1j * p.kappa * stats.mean_field.coeffs)


@dataclass(frozen=True, eq=False)
class FbarCache:
    """Last micro-solve per replica row: reference fields and their invariant means."""

    a_ref: np.ndarray
    mean: np.ndarray


class AveragedCoupling:
    """Averaged-coupling evaluator with per-replica caching of micro-solves.

    A row is re-solved when ||a - a_ref|| > cache_threshold * ||a_ref||.  Caches
    are immutable values; :meth:`evaluate` returns a fresh one.
    """

    def __init__(self, p: ModelParams, noise: NoiseSpec, cfg: ErgodicConfig, rng: RngStream, n_phys: int | None = None):
        self.p, self.noise, self.cfg, self.rng, self.n_phys = p, noise, cfg, rng, n_phys
        self.n_solves = 0

    def evaluate(self, a: np.ndarray, replicas, step: int, cache: FbarCache | None = None):
        p = self.p
        if p.kappa == 0.0:
            return p.eta * a, cache
        if cache is None:
            stale = np.ones(a.shape[0], dtype=bool)
            a_ref = np.empty_like(a)
            mean = np.empty_like(a)
        else:
            moved = np.sqrt(np.sum(np.abs(a - cache.a_ref) ** 2, axis=-1))
            ref = np.sqrt(np.sum(np.abs(cache.a_ref) ** 2, axis=-1))
            stale = moved > self.cfg.cache_threshold * ref
            a_ref = cache.a_ref.copy()
            mean = cache.mean.copy()
        if np.any(stale):
            rows = np.flatnonzero(stale)
            keys = [(replicas[i], step) for i in rows]
            res = _micro_solve(a[rows], keys, self.cfg, p, self.noise, self.rng, self.n_phys)
            _check_agreement(res, self.cfg, p)
            a_ref[rows] = a[rows]
            mean[rows] = res.mean
            self.n_solves += rows.size
        return p.eta * a + 1j * p.kappa * mean, FbarCache(a_ref, mean)



@dataclass(frozen=True, eq=False)
class ContractionReport:
    times: np.ndarray
    diff_sq: np.ndarray
    ratios: np.ndarray
    max_ratio: float


def contraction_diagnostic(a: SpectralField, x0: SpectralField, y0: SpectralField, t_end: float, p: ModelParams,
                           noise: NoiseSpec, rng: RngStream, h: float = 1e-3, key: int = 0,
                           n_phys: int | None = None) -> ContractionReport:
    """Ratio ||B^{a,x0}(t) - B^{a,y0}(t)||^2 / (||x0 - y0||^2 e^{-2 alpha t}) under identical noise."""
    x = np.stack([x0.coeffs, y0.coeffs])
    traj = simulate_frozen_fast(a, x, t_end, h, p, noise, rng, replica=key, n_phys=n_phys, shared_noise=True)
    d = traj.slow[0] - traj.slow[1]
    diff_sq = np.sum(np.abs(d) ** 2, axis=-1)
    d0 = diff_sq[0]
    if d0 == 0.0:
        ratios = np.zeros_like(diff_sq)
    else:
        ratios = diff_sq / (d0 * np.exp(-2.0 * p.alpha * traj.times))
    return ContractionReport(traj.times, diff_sq, ratios, float(np.max(ratios)))


@dataclass(frozen=True, eq=False)
class MixingReport:
    times: np.ndarray
    distance: np.ndarray
    noise_floor: np.ndarray


def mixing_diagnostic(a: SpectralField, x0: SpectralField, t_grid, p: ModelParams, cfg: ErgodicConfig,
                      noise: NoiseSpec, rng: RngStream, fbar: SpectralField | None = None, n_paths: int = 200,
                      h: float | None = None, n_phys: int | None = None) -> MixingReport:
    """Decay of ||E f(a, B^{a,x0}(t)) - fbar(a)|| with its Monte Carlo noise floor.

    The floor is |kappa| times the standard error of the path average, combined
    with that of fbar when fbar is estimated here.
    """
    h = cfg.h_micro if h is None else h
    t_grid = np.asarray(t_grid, dtype=np.float64)
    idx = np.rint(t_grid / h).astype(int)
    if np.any(np.abs(idx * h - t_grid) > 1e-9):
        raise ConfigError("t_grid must consist of multiples of h")
    fbar_se = 0.0
    if fbar is None:
        stats = estimate_invariant_mean(a, cfg, p, noise, rng, n_phys=n_phys)
        fbar = SpectralField(p.eta * a.coeffs + 1j * p.kappa * stats.mean_field.coeffs)
        fbar_se = float(_norm_se(stats.mean_stderr))
    t_end = max(float(idx.max()) * h, h)
    traj = simulate_frozen_fast(a, x0, t_end, h, p, noise, rng, replica=range(n_paths), n_phys=n_phys)
    b = traj.slow[:, idx]                                             # (R, T, N)
    ef = p.eta * a.coeffs + 1j * p.kappa * b.mean(axis=0)
    distance = np.sqrt(np.sum(np.abs(ef - fbar.coeffs) ** 2, axis=-1))
    floor = abs(p.kappa) * np.sqrt(_norm_se(_stderr(b, axis=0)) ** 2 + fbar_se**2)
    return MixingReport(t_grid, distance, floor)
