"""Exponential Euler steppers and path drivers.

Each stepper applies the linear semigroup exactly per mode and treats the
cubic, quintic and coupling terms explicitly:

    u <- e^{tau L} u + tau phi1(tau L) N(u) + int_0^tau S(tau - s) sigma dW

with phi1(z) = (e^z - 1)/z.  The fast variable of the coupled system is
advanced with tau = h / eps, which also absorbs the 1/sqrt(eps) noise scale.

All arrays carry a leading replica axis.  Noise for replica r at step n on
channel c is keyed by (r, c, n), so paths sharing those keys share noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DeltaNotAligned, NonFinite, StepTooLarge
from .model import FieldPair, ModelParams, SpectralField, cubic_kernel, quintic_kernel
from .noise import FAST, SLOW, ConvolutionSampler, NoiseSpec, RngStream
from .spectral import SineBasisGrid, linear_symbol, phi1, sine_grid

BLOWUP_MODULUS = 1e6
DEFAULT_C_FAST = 0.1


def h_max(eps: float, c_fast: float = DEFAULT_C_FAST) -> float:
    return c_fast * eps


def default_step(eps: float) -> float:
    return min(1e-3, h_max(eps))


def default_initial(n_modes: int) -> SpectralField:
    """Smooth O(1) field with a_1 = 1 and a_2 = 0.5i."""
    return SpectralField.from_modes({1: 1.0, 2: 0.5j}, n_modes)


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    h: float
    stride: int = 1

    def __post_init__(self):
        if not (self.t_end > 0 and self.h > 0 and math.isfinite(self.t_end) and math.isfinite(self.h)):
            raise ConfigError(f"need t_end > 0 and h > 0, got T={self.t_end}, h={self.h}")
        if int(self.stride) < 1:
            raise ConfigError("stride must be >= 1")
        object.__setattr__(self, "stride", int(self.stride))

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.h - 1e-9))

    @property
    def snapshot_steps(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.stride)

    @property
    def times(self) -> np.ndarray:
        return self.snapshot_steps * self.h


class Reaction:
    """Cubic plus quintic term F(u) + G(u) by pseudo-spectral evaluation."""

    def __init__(self, p: ModelParams, grid: SineBasisGrid):
        self.p = p
        self.grid = grid

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        if not self.p.nonlinear:
            return np.zeros_like(coeffs)
        z = self.grid.synthesise(coeffs)
        mod2 = z.real**2 + z.imag**2
        peak = np.max(mod2) if mod2.size else 0.0
        if not peak <= BLOWUP_MODULUS**2:
            raise NonFinite(f"field modulus {math.sqrt(peak) if np.isfinite(peak) else peak:.3g} exceeds blow-up guard")
        p = self.p
        values = (complex(p.gamma, 1.0) * mod2 + complex(p.mu, p.nu) * mod2 * mod2) * z
        return self.grid.analyse(values)


class Propagator:
    """Exponential Euler coefficients for one step of length tau."""

    def __init__(self, n_modes: int, tau: float, p: ModelParams):
        z = linear_symbol(n_modes, p) * tau
        self.tau = tau
        self.decay = np.exp(z)
        self.gain = tau * phi1(z)

    def __call__(self, u: np.ndarray, drift: np.ndarray) -> np.ndarray:
        return self.decay * u + self.gain * drift


def _noise(sampler: ConvolutionSampler, rng: RngStream, replicas, step: int, like: np.ndarray) -> np.ndarray | None:
    if sampler.is_zero:
        return None
    return sampler.draw(rng, replicas, step).reshape(like.shape)


def _add(u, n):
    return u if n is None else u + n


class SlowFastStepper:
    """One step of the coupled system with a single macro step h (fast variable uses h / eps)."""

    def __init__(self, p: ModelParams, noise: NoiseSpec, h: float, n_modes: int, n_phys: int | None = None,
                 c_fast: float = DEFAULT_C_FAST):
        if h <= 0:
            raise ConfigError(f"h must be > 0, got {h}")
        if h > h_max(p.eps, c_fast) * (1 + 1e-12):
            raise StepTooLarge(f"h={h} exceeds h_max={h_max(p.eps, c_fast)} for eps={p.eps}")
        self.p, self.h = p, h
        self.grid = sine_grid(n_modes, n_phys)
        self.reaction = Reaction(p, self.grid)
        self.slow = Propagator(n_modes, h, p)
        self.fast = Propagator(n_modes, h / p.eps, p)
        self.conv_slow = ConvolutionSampler(noise, SLOW, h, p, n_modes)
        self.conv_fast = ConvolutionSampler(noise, FAST, h / p.eps, p, n_modes)

    def noise(self, rng: RngStream, replicas, step: int, like: np.ndarray):
        return (_noise(self.conv_slow, rng, replicas, step, like), _noise(self.conv_fast, rng, replicas, step, like))

    def __call__(self, a, b, n1=None, n2=None):
        p = self.p
        a_new = self.slow(a, self.reaction(a) + p.eta * a + 1j * p.kappa * b)
        b_new = self.fast(b, self.reaction(b) + p.eta * b + 1j * p.kappa * a)
        return _add(a_new, n1), _add(b_new, n2)


class FrozenFastStepper:
    """Fast equation in its own time with the slow input held fixed."""

    def __init__(self, p: ModelParams, noise: NoiseSpec, h: float, n_modes: int, n_phys: int | None = None):
        if h <= 0:
            raise ConfigError(f"h must be > 0, got {h}")
        self.p, self.h = p, h
        self.grid = sine_grid(n_modes, n_phys)
        self.reaction = Reaction(p, self.grid)
        self.prop = Propagator(n_modes, h, p)
        self.conv = ConvolutionSampler(noise, FAST, h, p, n_modes)

    def __call__(self, b, frozen_a, n2=None):
        p = self.p
        return _add(self.prop(b, self.reaction(b) + p.eta * b + 1j * p.kappa * frozen_a), n2)


class AveragedStepper:
    """Averaged slow equation: drift L + F + G + fbar, channel-1 noise."""

    def __init__(self, p: ModelParams, noise: NoiseSpec, h: float, n_modes: int, n_phys: int | None = None):
        self.p, self.h = p, h
        self.grid = sine_grid(n_modes, n_phys)
        self.reaction = Reaction(p, self.grid)
        self.prop = Propagator(n_modes, h, p)
        self.conv = ConvolutionSampler(noise, SLOW, h, p, n_modes)

    def __call__(self, a, fbar_value, n1=None):
        return _add(self.prop(a, self.reaction(a) + fbar_value), n1)


# --- single-step API on state records -------------------------------------

@dataclass(frozen=True)
class SlowFastState:
    pair: FieldPair
    t: float
    params: ModelParams
    step: int = 0


@dataclass(frozen=True)
class FrozenFastState:
    b: SpectralField
    frozen_a: SpectralField
    t: float = 0.0
    step: int = 0


@dataclass(frozen=True)
class AveragedState:
    a_bar: SpectralField
    t: float = 0.0
    fbar_cache: object = None
    step: int = 0


@dataclass(frozen=True)
class AuxiliaryState:
    a_hat: SpectralField
    b_hat: SpectralField
    delta: float
    block: int
    frozen_slow: SpectralField
    t: float


def _batched(coeffs: np.ndarray) -> tuple[np.ndarray, bool]:
    return (coeffs[None, :], True) if coeffs.ndim == 1 else (coeffs, False)


def step_slow_fast(s: SlowFastState, h: float, noise: NoiseSpec, rng: RngStream, key: int = 0,
                   n_phys: int | None = None, c_fast: float = DEFAULT_C_FAST) -> SlowFastState:
    """Advance the coupled pair by one macro step; ``key`` is the replica id."""
    a, single = _batched(s.pair.slow.coeffs)
    b, _ = _batched(s.pair.fast.coeffs)
    if a.shape[0] != 1:
        raise ConfigError("step_slow_fast works on a single replica; use simulate_path for batches")
    st = SlowFastStepper(s.params, noise, h, a.shape[-1], n_phys, c_fast)
    a, b = st(a, b, *st.noise(rng, [key], s.step, a))
    if single:
        a, b = a[0], b[0]
    return SlowFastState(FieldPair(SpectralField(a), SpectralField(b)), s.t + h, s.params, s.step + 1)


def step_frozen_fast(s: FrozenFastState, h: float, p: ModelParams, noise: NoiseSpec, rng: RngStream, key: int = 0,
                     n_phys: int | None = None) -> FrozenFastState:
    """One step of the frozen fast equation (channel 2 keys (key, s.step))."""
    b, single = _batched(s.b.coeffs)
    st = FrozenFastStepper(p, noise, h, b.shape[-1], n_phys)
    b = st(b, s.frozen_a.coeffs, _noise(st.conv, rng, [key], s.step, b))
    return FrozenFastState(SpectralField(b[0] if single else b), s.frozen_a, s.t + h, s.step + 1)


def evaluate_coupling(fbar, a: np.ndarray, replicas, step: int, cache=None):
    """Call an averaged-coupling evaluator; plain callables get no cache."""
    if hasattr(fbar, "evaluate"):
        return fbar.evaluate(a, replicas, step, cache)
    return np.asarray(fbar(a), dtype=np.complex128), cache


def step_averaged(s: AveragedState, h: float, p: ModelParams, noise: NoiseSpec, rng: RngStream, key: int = 0,
                  fbar: Callable | None = None, n_phys: int | None = None) -> AveragedState:
    """One step of the averaged equation with channel-1 keys (key, s.step)."""
    if fbar is None:
        raise ConfigError("step_averaged needs an averaged-coupling evaluator")
    a, single = _batched(s.a_bar.coeffs)
    st = AveragedStepper(p, noise, h, a.shape[-1], n_phys)
    value, cache = evaluate_coupling(fbar, a, [key], s.step, s.fbar_cache)
    a = st(a, value, _noise(st.conv, rng, [key], s.step, a))
    return AveragedState(SpectralField(a[0] if single else a), s.t + h, cache, s.step + 1)


# --- path drivers -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a batch of paths: ``slow``/``fast`` have shape (R, S, N)."""

    times: np.ndarray
    steps: np.ndarray
    slow: np.ndarray
    fast: np.ndarray | None
    replicas: tuple[int, ...]
    h: float
    stride: int
    params: ModelParams

    def state(self, replica_index: int, snapshot: int) -> SlowFastState:
        pair = FieldPair(SpectralField(self.slow[replica_index, snapshot]), SpectralField(self.fast[replica_index, snapshot]))
        return SlowFastState(pair, float(self.times[snapshot]), self.params, int(self.steps[snapshot]))


def _replica_tuple(replica) -> tuple[int, ...]:
    return (int(replica),) if np.ndim(replica) == 0 else tuple(int(r) for r in replica)


def _initial(field_, n_rep: int) -> np.ndarray:
    c = field_.coeffs if isinstance(field_, SpectralField) else np.asarray(field_, dtype=np.complex128)
    return np.array(np.broadcast_to(c, (n_rep, c.shape[-1])), dtype=np.complex128)


class _Recorder:
    def __init__(self, grid: TimeGrid, n_rep: int, n_modes: int, fields: int):
        self.stride = grid.stride
        self.steps = grid.snapshot_steps
        self.buf = [np.empty((n_rep, self.steps.size, n_modes), dtype=np.complex128) for _ in range(fields)]
        self.i = 0

    def __call__(self, step: int, *arrays):
        if step % self.stride == 0 and self.i < self.steps.size:
            for buf, arr in zip(self.buf, arrays):
                buf[:, self.i] = arr
            self.i += 1


def simulate_path(initial: FieldPair, grid: TimeGrid, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                  replica=0, n_phys: int | None = None, c_fast: float = DEFAULT_C_FAST) -> Trajectory:
    """March the coupled system over ``grid`` for one or several replica ids."""
    reps = _replica_tuple(replica)
    a = _initial(initial.slow, len(reps))
    b = _initial(initial.fast, len(reps))
    st = SlowFastStepper(p, noise, grid.h, a.shape[-1], n_phys, c_fast)
    rec = _Recorder(grid, len(reps), a.shape[-1], 2)
    rec(0, a, b)
    for n in range(grid.n_steps):
        a, b = st(a, b, *st.noise(rng, reps, n, a))
        rec(n + 1, a, b)
    return Trajectory(grid.times, grid.snapshot_steps, rec.buf[0], rec.buf[1], reps, grid.h, grid.stride, p)


def simulate_averaged(a0, grid: TimeGrid, p: ModelParams, noise: NoiseSpec, rng: RngStream, fbar,
                      replica=0, n_phys: int | None = None) -> Trajectory:
    """March the averaged equation; channel-1 keys match :func:`simulate_path`."""
    reps = _replica_tuple(replica)
    a = _initial(a0, len(reps))
    st = AveragedStepper(p, noise, grid.h, a.shape[-1], n_phys)
    rec = _Recorder(grid, len(reps), a.shape[-1], 1)
    rec(0, a)
    cache = None
    for n in range(grid.n_steps):
        value, cache = evaluate_coupling(fbar, a, reps, n, cache)
        a = st(a, value, _noise(st.conv, rng, reps, n, a))
        rec(n + 1, a)
    return Trajectory(grid.times, grid.snapshot_steps, rec.buf[0], None, reps, grid.h, grid.stride, p)


def simulate_frozen_fast(frozen_a, x0, t_end: float, h: float, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                         replica=0, stride: int = 1, n_phys: int | None = None, shared_noise: bool = False) -> Trajectory:
    """Frozen fast paths B^{A,X}; results are stored in ``slow`` (``fast`` is None).

    With ``shared_noise`` every row of ``x0`` is driven by the increments of the
    first replica id, so differences between rows are noise-free.
    """
    reps = _replica_tuple(replica)
    x = np.asarray(x0.coeffs if isinstance(x0, SpectralField) else x0, dtype=np.complex128)
    n_rows = x.shape[0] if (x.ndim == 2 and shared_noise) else len(reps)
    b = _initial(x, n_rows)
    frozen = frozen_a.coeffs if isinstance(frozen_a, SpectralField) else np.asarray(frozen_a)
    grid = TimeGrid(t_end, h, stride)
    st = FrozenFastStepper(p, noise, h, b.shape[-1], n_phys)
    rec = _Recorder(grid, n_rows, b.shape[-1], 1)
    rec(0, b)
    for n in range(grid.n_steps):
        if shared_noise:
            eta = None if st.conv.is_zero else st.conv.draw(rng, reps[:1], n)
        else:
            eta = _noise(st.conv, rng, reps, n, b)
        b = st(b, frozen, eta)
        rec(n + 1, b)
    return Trajectory(grid.times, grid.snapshot_steps, rec.buf[0], None, reps, h, stride, p)


@dataclass(frozen=True, eq=False)
class AuxiliaryTrajectory:
    """Khasminskii pair on the base snapshot grid, arrays of shape (R, S, N)."""

    times: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    delta: float
    block_steps: int

    def state(self, replica_index: int, snapshot: int, base: Trajectory) -> AuxiliaryState:
        t = float(self.times[snapshot])
        step = int(base.steps[snapshot])
        k = step // self.block_steps
        if step == int(base.steps[-1]) and step > 0 and step % self.block_steps == 0:
            k -= 1                      # no restart at the final time
        frozen_idx = (k * self.block_steps) // base.stride
        return AuxiliaryState(SpectralField(self.a_hat[replica_index, snapshot]),
                              SpectralField(self.b_hat[replica_index, snapshot]), self.delta, k,
                              SpectralField(base.slow[replica_index, frozen_idx]), t)


def block_steps_for(delta: float, h: float, n_steps: int, stride: int) -> int:
    """Number of integrator steps per freezing block; raises if misaligned."""
    if delta <= 0:
        raise DeltaNotAligned(f"delta must be > 0, got {delta}")
    if delta >= n_steps * h * (1 - 1e-12):
        return n_steps
    m = round(delta / h)
    if m < 1 or abs(m * h - delta) > 1e-9 * max(delta, 1.0):
        raise DeltaNotAligned(f"delta={delta} is not an integer multiple of h={h}")
    if m % stride:
        raise DeltaNotAligned(f"block of {m} steps is not a multiple of the snapshot stride {stride}")
    return m


def simulate_auxiliary(base: Trajectory, delta: float, p: ModelParams, noise: NoiseSpec, rng: RngStream,
                       n_phys: int | None = None) -> AuxiliaryTrajectory:
    """Khasminskii auxiliary pair built on a coupled base trajectory.

    B_hat restarts from B(k delta) on every block and feels the frozen A(k delta);
    A_hat feels F, G and eta evaluated at A(k delta) plus i kappa B_hat.  Both use
    the base run's noise keys.  Snapshots are right-continuous at block starts.
    """
    if base.fast is None:
        raise ConfigError("base trajectory must contain the fast component")
    n_steps = int(base.steps[-1])
    m = block_steps_for(delta, base.h, n_steps, base.stride)
    reps = base.replicas
    h = base.h
    st = SlowFastStepper(p, noise, h, base.slow.shape[-1], n_phys, c_fast=math.inf)
    a_hat = base.slow[:, 0].copy()
    rec = _Recorder(TimeGrid(n_steps * h, h, base.stride), len(reps), a_hat.shape[-1], 2)
    frozen = b_hat = slow_drift = None

    def restart(n):
        idx = n // base.stride
        a_k = base.slow[:, idx]
        return a_k, base.fast[:, idx].copy(), st.reaction(a_k) + p.eta * a_k

    frozen, b_hat, slow_drift = restart(0)
    rec(0, a_hat, b_hat)
    for n in range(n_steps):
        n1, n2 = st.noise(rng, reps, n, a_hat)
        a_new = _add(st.slow(a_hat, slow_drift + 1j * p.kappa * b_hat), n1)
        b_hat = _add(st.fast(b_hat, st.reaction(b_hat) + p.eta * b_hat + 1j * p.kappa * frozen), n2)
        a_hat = a_new
        if (n + 1) % m == 0 and n + 1 < n_steps:
            frozen, b_hat, slow_drift = restart(n + 1)
        rec(n + 1, a_hat, b_hat)
    return AuxiliaryTrajectory(base.times, rec.buf[0], rec.buf[1], delta, m)
