"""Numerical oracles for the standalone inequalities and regularity claims.

Every check is deterministic given an :class:`RngStream` and returns a report
carrying a machine-readable verdict plus the worst-case witness.

Random fields are band-limited to modes k <= N/2 with Gaussian coefficients
scaled by 1/k, so products up to degree six stay below the quadrature's
aliasing limit and discretization error cannot pose as a violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, HypothesisViolation
from .integrate import DEFAULT_C_FAST, SlowFastStepper, default_initial, default_step
from .model import ModelParams, SpectralField, mode_eigenvalues, nonlinearity_cubic, nonlinearity_quintic
from .noise import AUX, NoiseSpec, RngStream

# stream ids for the AUX channel, one per check
_MONOTONE, _LAPLACIAN, _LIPSCHITZ = 1, 2, 3

Z95 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class CheckReport:
    """Outcome of an inequality oracle.

    ``max_value`` is the worst normalized value (violation iff > ``tolerance``);
    ``witness`` holds the inputs that produced it.
    """

    name: str
    n_trials: int
    max_value: float
    tolerance: float
    n_violations: int
    witness: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict[str, Any]:
        w = {k: _jsonable(v) for k, v in self.witness.items()}
        return {"name": self.name, "n_trials": self.n_trials, "max_value": self.max_value,
                "tolerance": self.tolerance, "n_violations": self.n_violations, "passed": self.passed, "witness": w}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        if np.iscomplexobj(v):
            return {"re": v.real.tolist(), "im": v.imag.tolist()}
        return v.tolist()
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, np.generic):
        return v.item()
    return v


def random_fields(gen: np.random.Generator, n_fields: int, n_modes: int, band: int | None = None,
                  amplitude: np.ndarray | float = 1.0) -> np.ndarray:
    """Band-limited Gaussian coefficient vectors scaled by 1/k, shape (n_fields, n_modes)."""
    band = max(1, n_modes // 2) if band is None else band
    k = np.arange(1, band + 1)
    xi = gen.standard_normal((n_fields, band, 2))
    c = np.zeros((n_fields, n_modes), dtype=np.complex128)
    c[:, :band] = (xi[..., 0] + 1j * xi[..., 1]) / (math.sqrt(2.0) * k)
    return c * np.reshape(amplitude, (-1, 1))


def _amplitudes(gen: np.random.Generator, n: int, lo: float = 0.1, hi: float = 3.0) -> np.ndarray:
    return np.exp(gen.uniform(math.log(lo), math.log(hi), n))


def _rng(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))


def _inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sum((u * np.conj(v)).real, axis=-1)


def check_monotone_dissipative(n_trials: int = 1000, n_modes: int = 32, rng: RngStream | int | None = None,
                               tolerance: float = 1e-8) -> CheckReport:
    """(A1 - A2, F(A1) - F(A2)) <= 0 and the same for G, on random field pairs.

    Values are normalized by ||A1 - A2|| ||N(A1) - N(A2)|| (the Cauchy-Schwarz scale).
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    gen = _rng(rng).generator(0, AUX, _MONOTONE)
    a1 = random_fields(gen, n_trials, n_modes, amplitude=_amplitudes(gen, n_trials))
    a2 = random_fields(gen, n_trials, n_modes, amplitude=_amplitudes(gen, n_trials))
    d = a1 - a2
    worst, worst_val, n_bad = None, -math.inf, 0
    for name, op in (("cubic", nonlinearity_cubic), ("quintic", nonlinearity_quintic)):
        dn = op(SpectralField(a1)).coeffs - op(SpectralField(a2)).coeffs
        val = _inner(d, dn)
        scale = np.sqrt(_inner(d, d) * _inner(dn, dn))
        norm = np.divide(val, scale, out=np.zeros_like(val), where=scale > 0)
        n_bad += int(np.sum(norm > tolerance))
        i = int(np.argmax(norm))
        if norm[i] > worst_val:
            worst_val = float(norm[i])
            worst = {"term": name, "a1": a1[i], "a2": a2[i], "inner_product": float(val[i]), "scale": float(scale[i])}
    return CheckReport("monotone_dissipative", n_trials, worst_val, tolerance, n_bad, worst)


def laplacian_sign_constant(sigma: float, alpha_rot: float) -> float:
    """Sharp lambda_alpha = 1 + sigma - sigma sqrt(1 + alpha^2).

    Pointwise the integrand is |A|^{2 sigma - 2} Q(Re w, Im w) with w = conj(A) A_x
    and Q = -(1 + 2 sigma) x^2 - y^2 + 2 alpha sigma x y; lambda_alpha is the
    smallest eigenvalue of -Q, positive exactly when |alpha| < sqrt(2 sigma + 1) / sigma.
    """
    return 1.0 + sigma - sigma * math.sqrt(1.0 + alpha_rot**2)


def _derivative_grid(n_modes: int, n_phys: int):
    j = np.arange(1, n_phys + 1)
    k = np.arange(1, n_modes + 1)
    arg = np.pi * np.outer(k, j) / (n_phys + 1)
    return math.sqrt(2.0) * np.sin(arg), math.sqrt(2.0) * (np.pi * k)[:, None] * np.cos(arg)


def laplacian_sign_value(coeffs: np.ndarray, sigma: float, alpha_rot: float, n_phys: int | None = None):
    """Return ((-A_xx, (-1 + alpha i)|A|^{2 sigma} A), int |A|^{2 sigma} |A_x|^2) per row.

    Quadrature on x_j = j/(M+1) with weight 1/(M+1); both integrands vanish at the
    boundary and, for integer sigma, are trigonometric polynomials that this rule
    integrates exactly when M + 1 exceeds half their top frequency.
    """
    coeffs = np.atleast_2d(coeffs)
    n = coeffs.shape[-1]
    m = 8 * n if n_phys is None else n_phys
    s, c = _derivative_grid(n, m)
    u = coeffs @ s
    ux = coeffs @ c
    uxx_neg = (coeffs * mode_eigenvalues(n)) @ s
    mod2 = u.real**2 + u.imag**2
    weight = mod2**sigma
    h = complex(-1.0, alpha_rot) * weight * u
    pairing = np.sum((uxx_neg * np.conj(h)).real, axis=-1) / (m + 1)
    gradient = np.sum(weight * (ux.real**2 + ux.imag**2), axis=-1) / (m + 1)
    return pairing, gradient


def check_laplacian_sign(n_trials: int = 500, n_modes: int = 32, sigma: float = 1.0, alpha_rot: float = 1.0,
                         rng: RngStream | int | None = None, tolerance: float = 1e-6) -> CheckReport:
    """(-A_xx, (-1 + alpha i)|A|^{2 sigma} A) + lambda_alpha int |A|^{2 sigma}|A_x|^2 <= 0.

    Reported values are relative to int |A|^{2 sigma} |A_x|^2.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if not sigma > 0:
        raise HypothesisViolation(f"sigma must be > 0, got {sigma}")
    bound = math.sqrt(2.0 * sigma + 1.0) / sigma
    if abs(alpha_rot) >= bound:
        raise HypothesisViolation(f"|alpha_rot|={abs(alpha_rot)} >= sqrt(2 sigma + 1)/sigma = {bound:.6g}")
    lam = laplacian_sign_constant(sigma, alpha_rot)
    gen = _rng(rng).generator(int(round(8 * sigma)), AUX, _LAPLACIAN)
    a = random_fields(gen, n_trials, n_modes, amplitude=_amplitudes(gen, n_trials))
    pairing, gradient = laplacian_sign_value(a, sigma, alpha_rot)
    value = pairing + lam * gradient
    norm = np.divide(value, gradient, out=np.zeros_like(value), where=gradient > 0)
    i = int(np.argmax(norm))
    witness = {"a": a[i], "pairing": float(pairing[i]), "gradient_term": float(gradient[i]), "lambda_alpha": lam}
    return CheckReport(f"laplacian_sign_sigma{sigma:g}", n_trials, float(norm[i]), tolerance,
                       int(np.sum(norm > tolerance)), witness)


def check_pointwise_lipschitz(n_trials: int = 100_000, sigma: float = 1.0, rng: RngStream | int | None = None,
                              rtol: float = 1e-12) -> CheckReport:
    """| |z1|^{2s} z1 - |z2|^{2s} z2 | <= (4s - 1)(|z1|^{2s} + |z2|^{2s}) |z1 - z2| for s >= 1/2.

    Half the pairs are independent with log-uniform moduli in [1e-3, 1e3]; the
    other half are close pairs z2 = z1 (1 + small), where the bound is tightest.
    Values are LHS / RHS.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if sigma < 0.5:
        raise HypothesisViolation(f"sigma must be >= 1/2, got {sigma}")
    gen = _rng(rng).generator(int(round(8 * sigma)), AUX, _LIPSCHITZ)

    def draw(n):
        r = np.exp(gen.uniform(math.log(1e-3), math.log(1e3), n))
        return r * np.exp(2j * np.pi * gen.uniform(size=n))

    n_far = n_trials - n_trials // 2
    z1 = draw(n_trials)
    z2 = np.empty_like(z1)
    z2[:n_far] = draw(n_far)
    pert = np.exp(gen.uniform(math.log(1e-8), math.log(1e-1), n_trials - n_far))
    z2[n_far:] = z1[n_far:] * (1.0 + pert * np.exp(2j * np.pi * gen.uniform(size=n_trials - n_far)))
    w1, w2 = np.abs(z1) ** (2 * sigma), np.abs(z2) ** (2 * sigma)
    lhs = np.abs(w1 * z1 - w2 * z2)
    rhs = (4 * sigma - 1) * (w1 + w2) * np.abs(z1 - z2)
    ratio = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
    bad = (lhs > rhs * (1 + rtol)) | ((rhs == 0) & (lhs > 0))
    i = int(np.argmax(ratio))
    witness = {"z1": complex(z1[i]), "z2": complex(z2[i]), "lhs": float(lhs[i]), "rhs": float(rhs[i])}
    return CheckReport(f"pointwise_lipschitz_sigma{sigma:g}", n_trials, float(ratio[i]), 1.0 + rtol,
                       int(np.sum(bad)), witness)


# --- Monte Carlo regularity and moment checks -----------------------------

@dataclass(frozen=True, eq=False)
class HolderEstimate:
    slope: float
    ci_low: float
    ci_high: float
    stderr: float
    lags: np.ndarray
    moments: np.ndarray
    moment_stderr: np.ndarray
    t0: float
    n_samples: int

    def to_dict(self) -> dict[str, Any]:
        return {"slope": self.slope, "ci_low": self.ci_low, "ci_high": self.ci_high, "stderr": self.stderr,
                "lags": self.lags.tolist(), "moments": self.moments.tolist(),
                "moment_stderr": self.moment_stderr.tolist(), "t0": self.t0, "n_samples": self.n_samples}


def dyadic_lags(k_min: int = 4, k_max: int = 9) -> list[float]:
    return [2.0**-k for k in range(k_min, k_max + 1)]


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield range(start, min(n, start + size))


def holder_increments(p: ModelParams, noise: NoiseSpec, rng: RngStream, replicas, t0: float, lags: Sequence[float],
                      h: float, n_modes: int, n_phys: int | None = None, p_order: float = 1.0,
                      c_fast: float = DEFAULT_C_FAST) -> np.ndarray:
    """Per-replica ||A(t0 + lag) - A(t0)||^{2p}, shape (R, len(lags))."""
    steps = [round(lag / h) for lag in lags]
    n0 = round(t0 / h)
    if any(abs(s * h - lag) > 1e-9 * lag or s < 1 for s, lag in zip(steps, lags)):
        raise ConfigError("every lag must be a positive multiple of the integrator step")
    if abs(n0 * h - t0) > 1e-9 * max(t0, 1.0):
        raise ConfigError("t0 must be a multiple of the integrator step")
    reps = list(replicas)
    st = SlowFastStepper(p, noise, h, n_modes, n_phys, c_fast)
    a = np.tile(default_initial(n_modes).coeffs, (len(reps), 1))
    b = a.copy()
    base = a.copy() if n0 == 0 else None
    out = np.empty((len(reps), len(steps)))
    targets = {n0 + s: i for i, s in enumerate(steps)}
    for n in range(n0 + max(steps)):
        a, b = st(a, b, *st.noise(rng, reps, n, a))
        if n + 1 == n0:
            base = a.copy()
        if n + 1 in targets:
            out[:, targets[n + 1]] = np.sum(np.abs(a - base) ** 2, axis=-1) ** p_order
    return out


def fit_loglog(lags: np.ndarray, samples: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Least-squares slope of log mean vs log lag with a delta-method standard error.

    ``samples`` is (R, L); the covariance of the L sample means is propagated
    through the log and the linear fit.
    """
    lags = np.asarray(lags, dtype=np.float64)
    r = samples.shape[0]
    means = samples.mean(axis=0)
    x = np.log(lags)
    xc = x - x.mean()
    w = xc / np.sum(xc**2)
    slope = float(w @ np.log(means))
    if r < 2:
        return slope, math.nan, means, np.full_like(means, math.nan)
    cov = np.cov(samples, rowvar=False, ddof=1) / r
    jac = w / means
    se = float(math.sqrt(max(jac @ cov @ jac, 0.0)))
    return slope, se, means, np.sqrt(np.diag(cov))


def holder_exponent_estimate(p_order: float = 1.0, eps: float = 0.1, mc_samples: int = 200,
                             h_list: Sequence[float] | None = None, params: ModelParams | None = None,
                             noise: NoiseSpec | None = None, rng: RngStream | int | None = None, t0: float = 0.5,
                             n_modes: int = 32, h: float | None = None, n_phys: int | None = None,
                             chunk_size: int = 25, map_fn=map) -> HolderEstimate:
    """Fitted exponent of E||A(t0 + h) - A(t0)||^{2p} against h.

    The integrator step defaults to the largest power of two not above the
    usual step for ``eps``, so every dyadic lag is on the grid.  ``t0`` should
    sit past the initial transient, where the increment law is close to
    stationary; the default assumes T = 1.
    """
    if mc_samples < 2:
        raise ConfigError("mc_samples must be >= 2")
    p = (params or ModelParams()).with_eps(eps)
    noise = noise or NoiseSpec.default(n_modes)
    rng = _rng(rng)
    lags = np.asarray(dyadic_lags() if h_list is None else h_list, dtype=np.float64)
    if h is None:
        h = 2.0 ** math.floor(math.log2(default_step(eps)))
    if np.any(lags < h * (1 - 1e-12)):
        raise ConfigError(f"all lags must be >= the integrator step {h}")
    ratios = lags[1:] / lags[:-1] if lags.size > 1 else np.array([])
    if ratios.size and not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigError("h_list must be geometric")
    jobs = [(p, noise, rng, c, t0, lags.tolist(), h, n_modes, n_phys, p_order) for c in _chunks(mc_samples, chunk_size)]
    samples = np.concatenate(list(map_fn(_holder_job, jobs)), axis=0)
    slope, se, means, mse = fit_loglog(lags, samples)
    return HolderEstimate(slope, slope - Z95 * se, slope + Z95 * se, se, lags, means, mse, t0, mc_samples)


def _holder_job(args):
    p, noise, rng, reps, t0, lags, h, n_modes, n_phys, p_order = args
    return holder_increments(p, noise, rng, reps, t0, lags, h, n_modes, n_phys, p_order)


@dataclass(frozen=True, eq=False)
class MomentRow:
    """Moments of one epsilon: sup_t E||A||^{2p}, sup_t E||A_x||^{2p}, int_0^T E||B_x||^{2p} dt."""

    eps: float
    sup_l2: float
    sup_h1: float
    int_fast_h1: float
    sup_l2_se: float
    sup_h1_se: float
    int_fast_h1_se: float
    n_samples: int

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("eps", "sup_l2", "sup_h1", "int_fast_h1", "sup_l2_se", "sup_h1_se",
                                              "int_fast_h1_se", "n_samples")}


@dataclass(frozen=True, eq=False)
class MomentSweep:
    rows: list[MomentRow]
    ratio_limit: float = 3.0

    @property
    def h1_ratio(self) -> float:
        v = np.array([r.sup_h1 for r in self.rows])
        if v.size == 0 or np.min(v) == 0:
            return 1.0 if v.size == 0 or np.max(v) == 0 else math.inf
        return float(np.max(v) / np.min(v))

    @property
    def flags(self) -> list[str]:
        out = []
        for r in self.rows:
            if not all(math.isfinite(v) for v in (r.sup_l2, r.sup_h1, r.int_fast_h1)):
                out.append(f"blow-up at eps={r.eps}")
        if self.h1_ratio > self.ratio_limit:
            out.append(f"H1 moment varies by a factor {self.h1_ratio:.3g} across eps")
        return out


def moment_samples(p: ModelParams, noise: NoiseSpec, rng: RngStream, replicas, t_end: float, h: float, n_modes: int,
                   a0: SpectralField | None = None, b0: SpectralField | None = None, p_order: float = 1.0,
                   stride: int = 1, n_phys: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-replica time series of ||A||^{2p}, ||A_x||^{2p} and ||B_x||^{2p} on the snapshot grid."""
    from .integrate import TimeGrid

    reps = list(replicas)
    a0 = default_initial(n_modes) if a0 is None else a0
    b0 = default_initial(n_modes) if b0 is None else b0
    a = np.tile(a0.coeffs, (len(reps), 1))
    b = np.tile(b0.coeffs, (len(reps), 1))
    grid = TimeGrid(t_end, h, stride)
    st = SlowFastStepper(p, noise, h, n_modes, n_phys)
    mu = mode_eigenvalues(n_modes)
    n_snap = grid.snapshot_steps.size
    l2 = np.empty((len(reps), n_snap))
    h1 = np.empty_like(l2)
    fast = np.empty_like(l2)

    def record(i):
        ma, mb = np.abs(a) ** 2, np.abs(b) ** 2
        l2[:, i] = np.sum(ma, axis=-1) ** p_order
        h1[:, i] = np.sum(mu * ma, axis=-1) ** p_order
        fast[:, i] = np.sum(mu * mb, axis=-1) ** p_order

    record(0)
    for n in range(grid.n_steps):
        a, b = st(a, b, *st.noise(rng, reps, n, a))
        if (n + 1) % stride == 0:
            record((n + 1) // stride)
    return l2, h1, fast


def _sup_of_mean(x: np.ndarray) -> tuple[float, float]:
    m = x.mean(axis=0)
    i = int(np.argmax(m))
    se = x[:, i].std(ddof=1) / math.sqrt(x.shape[0]) if x.shape[0] > 1 else 0.0
    return float(m[i]), float(se)


def _time_integral(x: np.ndarray, dt: float) -> np.ndarray:
    return np.trapezoid(x, dx=dt, axis=-1) if hasattr(np, "trapezoid") else np.trapz(x, dx=dt, axis=-1)


def moment_sweep(eps_list: Sequence[float] = (0.5, 0.1, 0.02), p_order: float = 1.0, mc_samples: int = 100,
                 params: ModelParams | None = None, noise: NoiseSpec | None = None,
                 rng: RngStream | int | None = None, t_end: float = 1.0, n_modes: int = 32, h: float | None = None,
                 stride: int = 1, a0: SpectralField | None = None, b0: SpectralField | None = None,
                 n_phys: int | None = None, chunk_size: int = 25, map_fn=map) -> MomentSweep:
    """Per-eps moment table on a common step (the smallest default step in ``eps_list``)."""
    if mc_samples < 2:
        raise ConfigError("mc_samples must be >= 2")
    if any(not 0 < e <= 1 for e in eps_list):
        raise ConfigError("eps_list must lie in (0, 1]")
    base = params or ModelParams()
    noise = noise or NoiseSpec.default(n_modes)
    rng = _rng(rng)
    h = min(default_step(e) for e in eps_list) if h is None else h
    rows = []
    for eps in eps_list:
        p = base.with_eps(eps)
        jobs = [(p, noise, rng, c, t_end, h, n_modes, a0, b0, p_order, stride, n_phys)
                for c in _chunks(mc_samples, chunk_size)]
        parts = list(map_fn(_moment_job, jobs))
        l2, h1, fast = (np.concatenate([q[i] for q in parts]) for i in range(3))
        fast_int = _time_integral(fast, h * stride)
        s_l2, se_l2 = _sup_of_mean(l2)
        s_h1, se_h1 = _sup_of_mean(h1)
        rows.append(MomentRow(eps, s_l2, s_h1, float(fast_int.mean()), se_l2, se_h1,
                              float(fast_int.std(ddof=1) / math.sqrt(mc_samples)), mc_samples))
    return MomentSweep(rows)


def _moment_job(args):
    p, noise, rng, reps, t_end, h, n_modes, a0, b0, p_order, stride, n_phys = args
    return moment_samples(p, noise, rng, reps, t_end, h, n_modes, a0, b0, p_order, stride, n_phys)


def run_inequality_suite(rng: RngStream | int | None = None, n_modes: int = 32, n_pairs: int = 1000,
                         n_fields: int = 500, n_scalar: int = 100_000) -> list[CheckReport]:
    """The full inequality battery at its default sizes."""
    rng = _rng(rng)
    out = [check_monotone_dissipative(n_pairs, n_modes, rng)]
    out += [check_laplacian_sign(n_fields, n_modes, s, 1.0, rng) for s in (1.0, 2.0)]
    out += [check_pointwise_lipschitz(n_scalar, s, rng) for s in (0.5, 1.0, 2.0)]
    return out


# --- deterministic self-convergence -----------------------------------------

@dataclass(frozen=True, eq=False)
class SelfConvergence:
    steps: np.ndarray
    errors: np.ndarray
    order: float


def _march(kind: str, a0: np.ndarray, b0: np.ndarray, p: ModelParams, h: float, t_end: float,
           frozen_a: np.ndarray | None) -> np.ndarray:
    from .integrate import (FieldPair, FrozenFastState, SlowFastState, step_frozen_fast, step_slow_fast)

    quiet = NoiseSpec.default(a0.size, sigma1=0.0, sigma2=0.0)
    rng = RngStream(0)
    n = round(t_end / h)
    if kind == "slow_fast":
        s = SlowFastState(FieldPair(SpectralField(a0), SpectralField(b0)), 0.0, p)
        for _ in range(n):
            s = step_slow_fast(s, h, quiet, rng)
        return np.concatenate([s.pair.slow.coeffs, s.pair.fast.coeffs])
    s = FrozenFastState(SpectralField(b0), SpectralField(frozen_a))
    for _ in range(n):
        s = step_frozen_fast(s, h, p, quiet, rng)
    return s.b.coeffs


def self_convergence_order(kind: str = "slow_fast", p: ModelParams | None = None, n_modes: int = 16,
                           t_end: float = 0.2, steps: Sequence[float] | None = None,
                           refine: int = 16) -> SelfConvergence:
    """Observed temporal order of a noise-free run against a finer run with step min(steps) / refine.

    ``kind`` is "slow_fast" (coupled system) or "frozen_fast" (fast equation,
    own time).  The order is the least-squares slope of log error vs log h.
    """
    p = p or ModelParams()
    if kind == "slow_fast":
        top = 0.8 * p.eps * DEFAULT_C_FAST
    elif kind == "frozen_fast":
        top = 0.02
    else:
        raise ConfigError(f"unknown kind {kind!r}")
    steps = np.asarray([top, top / 2, top / 4] if steps is None else steps, dtype=np.float64)
    a0 = default_initial(n_modes).coeffs
    b0 = np.conj(a0) * 0.8
    frozen = a0 if kind == "frozen_fast" else None
    h_ref = float(np.min(steps)) / refine
    grid = np.concatenate([steps, [h_ref]])
    if np.any(np.abs(np.rint(t_end / grid) * grid - t_end) > 1e-9):
        raise ConfigError("t_end must be a multiple of every step")
    ref = _march(kind, a0, b0, p, h_ref, t_end, frozen)
    errors = np.array([np.linalg.norm(_march(kind, a0, b0, p, h, t_end, frozen) - ref) for h in steps])
    order = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    return SelfConvergence(steps, errors, order)
