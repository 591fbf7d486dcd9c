"""Trace-class Q-Wiener noise for the two channels.

Random numbers come from a keyed counter-based stream: the standard normals
for ``(replica, channel, step)`` are the leading entries of a Philox stream
whose counter encodes that key, and the mode index is the position in the
stream.  Any worker can therefore regenerate any increment, independent of
call order, and the first N modes do not depend on how many modes are drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NegativeDt
from .model import ModelParams, SpectralField, mode_eigenvalues

SLOW = 1
FAST = 2
MICRO = 3
INIT = 4
AUX = 5

_U64 = 1 << 64


def default_q_eigs(n_modes: int) -> np.ndarray:
    return 1.0 / np.arange(1, n_modes + 1, dtype=np.float64) ** 2


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Amplitudes and covariance eigenvalues of the two noise channels.

    ``complex_increments`` switches from real Brownian motions per mode to
    circularly symmetric complex ones with the same total variance.
    ``exact_complex_convolution`` samples the rotated stochastic convolution
    from its exact 2x2 covariance instead of the modulus-variance shortcut.
    """

    sigma1: float
    sigma2: float
    q_eigs1: np.ndarray
    q_eigs2: np.ndarray
    complex_increments: bool = False
    exact_complex_convolution: bool = False

    def __post_init__(self):
        for name in ("sigma1", "sigma2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"noise.{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        for name in ("q_eigs1", "q_eigs2"):
            q = np.array(getattr(self, name), dtype=np.float64)
            if q.ndim != 1 or q.size == 0 or not np.all(np.isfinite(q)) or np.any(q <= 0):
                raise ConfigError(f"noise.{name} must be a non-empty vector of positive numbers")
            q.setflags(write=False)
            object.__setattr__(self, name, q)

    @classmethod
    def default(cls, n_modes: int, sigma1: float = 0.5, sigma2: float = 0.5, **kw) -> NoiseSpec:
        q = default_q_eigs(n_modes)
        return cls(sigma1, sigma2, q, q.copy(), **kw)

    def sigma(self, channel: int) -> float:
        return {SLOW: self.sigma1, FAST: self.sigma2}[channel]

    def q_eigs(self, channel: int, n_modes: int) -> np.ndarray:
        q = {SLOW: self.q_eigs1, FAST: self.q_eigs2}[channel]
        if q.size < n_modes:
            raise ConfigError(f"channel {channel} has {q.size} covariance eigenvalues, need {n_modes}")
        return q[:n_modes]

    def trace(self, channel: int) -> float:
        return float(np.sum({SLOW: self.q_eigs1, FAST: self.q_eigs2}[channel]))

    def q_norm_sq(self, amplitude: float, channel: int) -> float:
        """||a||_{Q_i}^2 = a^2 Tr Q_i."""
        return amplitude**2 * self.trace(channel)

    def to_dict(self) -> dict:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "q_eigs1": self.q_eigs1.tolist(),
            "q_eigs2": self.q_eigs2.tolist(),
            "complex_increments": self.complex_increments,
            "exact_complex_convolution": self.exact_complex_convolution,
        }


@dataclass(frozen=True)
class RngStream:
    """Keyed normal generator; ``master_seed`` is a 64-bit unsigned integer."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < _U64:
            raise ConfigError(f"master_seed must be in [0, 2**64), got {self.master_seed}")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def _counter(self, replica: int, channel: int, step: int) -> np.ndarray:
        for name, v in (("replica", replica), ("channel", channel), ("step", step)):
            if not 0 <= int(v) < _U64:
                raise ConfigError(f"{name} key component out of range: {v}")
        return np.array([0, int(step), int(replica), int(channel)], dtype=np.uint64)

    def generator(self, replica: int, channel: int, step: int = 0) -> np.random.Generator:
        bitgen = np.random.Philox(key=[self.master_seed, 0], counter=self._counter(replica, channel, step))
        return np.random.Generator(bitgen)

    def normals(self, replica: int, channel: int, step: int, shape) -> np.ndarray:
        return self.generator(replica, channel, step).standard_normal(shape)

    def batch_normals(self, replicas, channel: int, step: int, shape) -> np.ndarray:
        """Stack of per-replica draws, shape (len(replicas), *shape).

        Equivalent to calling :meth:`normals` per replica; one bit generator is
        re-keyed in place, which is much cheaper than constructing new ones.
        """
        shape = tuple(np.atleast_1d(shape))
        bitgen = np.random.Philox(key=[self.master_seed, 0])
        gen = np.random.Generator(bitgen)
        key = np.array([self.master_seed, 0], dtype=np.uint64)
        out = np.empty((len(replicas),) + shape)
        for i, r in enumerate(replicas):
            bitgen.state = {
                "bit_generator": "Philox",
                "state": {"counter": self._counter(r, channel, step), "key": key},
                "buffer": np.zeros(4, dtype=np.uint64),
                "buffer_pos": 4,
                "has_uint32": 0,
                "uinteger": 0,
            }
            out[i] = gen.standard_normal(shape)
        return out


def _check_channel(channel: int) -> None:
    if channel not in (SLOW, FAST):
        raise ConfigError(f"channel must be 1 or 2, got {channel}")


def normals_per_mode(spec: NoiseSpec) -> int:
    return 2 if (spec.complex_increments or spec.exact_complex_convolution) else 1


def wiener_increment(spec: NoiseSpec, channel: int, dt: float, rng: RngStream, key: tuple[int, int] = (0, 0),
                     n_modes: int | None = None) -> SpectralField:
    """Increment of W_i over a step dt; ``key`` is (replica, step)."""
    _check_channel(channel)
    if dt < 0:
        raise NegativeDt(f"dt must be >= 0, got {dt}")
    n = spec.q_eigs1.size if n_modes is None else n_modes
    scale = np.sqrt(spec.q_eigs(channel, n) * dt)
    replica, step = key
    if spec.complex_increments:
        xi = rng.normals(replica, channel, step, (n, 2))
        z = (xi[:, 0] + 1j * xi[:, 1]) / math.sqrt(2.0)
    else:
        z = rng.normals(replica, channel, step, n).astype(np.complex128)
    return SpectralField(scale * z)


def convolution_variance(spec: NoiseSpec, channel: int, tau: float, p: ModelParams, n_modes: int) -> np.ndarray:
    """Per-mode E|int_0^tau S(tau - s) sigma dW|^2 = sigma^2 lambda_k (1 - e^{-2 beta mu_k tau}) / (2 beta mu_k)."""
    rate = 2.0 * p.beta * mode_eigenvalues(n_modes)
    return spec.sigma(channel) ** 2 * spec.q_eigs(channel, n_modes) * (-np.expm1(-rate * tau)) / rate


class ConvolutionSampler:
    """Maps standard normals onto the per-mode stochastic convolution over a step tau.

    Expects normals of shape (..., N) when ``width == 1`` and (..., N, 2)
    when ``width == 2``.
    """

    def __init__(self, spec: NoiseSpec, channel: int, tau: float, p: ModelParams, n_modes: int):
        _check_channel(channel)
        if tau < 0:
            raise NegativeDt(f"step must be >= 0, got {tau}")
        self.channel = channel
        self.n_modes = n_modes
        self.width = normals_per_mode(spec)
        self.variance = convolution_variance(spec, channel, tau, p, n_modes)
        self.is_zero = spec.sigma(channel) == 0.0 or tau == 0.0
        self._mode = "real"
        if spec.complex_increments:
            self._mode = "circular"
            self._std = np.sqrt(self.variance / 2.0)
        elif spec.exact_complex_convolution:
            self._mode = "exact"
            self._chol = _rotated_cholesky(spec, channel, tau, p, n_modes)
        else:
            # sampled with the exact modulus variance; rotation taken at the
            # right endpoint of the step, where the semigroup is the identity
            self._std = np.sqrt(self.variance)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        if self._mode == "real":
            return (self._std * xi).astype(np.complex128)
        if self._mode == "circular":
            return self._std * (xi[..., 0] + 1j * xi[..., 1])
        l11, l21, l22 = self._chol
        x1, x2 = xi[..., 0], xi[..., 1]
        return l11 * x1 + 1j * (l21 * x1 + l22 * x2)

    def draw(self, rng: RngStream, replicas, step: int) -> np.ndarray:
        shape = (self.n_modes,) if self.width == 1 else (self.n_modes, 2)
        return self(rng.batch_normals(replicas, self.channel, step, shape))


def _rotated_cholesky(spec, channel, tau, p, n_modes):
    """Cholesky factor of the (Re, Im) covariance of int_0^tau e^{-(i+beta) mu u} dW(u)."""
    mu = mode_eigenvalues(n_modes)
    a = 2.0 * p.beta * mu
    b = 2.0 * mu
    decay = np.exp(-a * tau)
    i0 = -np.expm1(-a * tau) / a
    ic = (a - decay * (a * np.cos(b * tau) - b * np.sin(b * tau))) / (a * a + b * b)
    i_s = (b - decay * (a * np.sin(b * tau) + b * np.cos(b * tau))) / (a * a + b * b)
    scale = spec.sigma(channel) ** 2 * spec.q_eigs(channel, n_modes)
    var_re = scale * (i0 + ic) / 2.0
    var_im = scale * (i0 - ic) / 2.0
    cov = -scale * i_s / 2.0
    l11 = np.sqrt(np.maximum(var_re, 0.0))
    l21 = np.divide(cov, l11, out=np.zeros_like(cov), where=l11 > 0)
    l22 = np.sqrt(np.maximum(var_im - l21**2, 0.0))
    return l11, l21, l22


def stochastic_convolution_increment(spec: NoiseSpec, channel: int, h: float, p: ModelParams, rng: RngStream,
                                     key: tuple[int, int] = (0, 0), n_modes: int | None = None) -> SpectralField:
    """One exact-variance sample of int_0^h S(h - s) sigma_i dW_i(s); ``key`` is (replica, step)."""
    if h < 0:
        raise NegativeDt(f"h must be >= 0, got {h}")
    n = spec.q_eigs1.size if n_modes is None else n_modes
    sampler = ConvolutionSampler(spec, channel, h, p, n)
    replica, step = key
    return SpectralField(sampler.draw(rng, [replica], step)[0])
