"""Domain types, parameter validation and the pointwise terms of the model.

Fields live on I = (0, 1) with homogeneous Dirichlet conditions and are stored
as coefficients in the orthonormal basis e_k(x) = sqrt(2) sin(k pi x).  Every
operation accepts coefficient arrays with arbitrary leading batch axes; the
last axis is always the mode index k = 1..N.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .errors import ConfigError, DimensionMismatch, HypothesisViolation

LAMBDA_POINCARE = math.pi**2


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the coupled cubic-quintic Ginzburg-Landau system.

    ``lambda_poincare`` and ``alpha`` are derived. Construction fails with
    :class:`HypothesisViolation` unless beta > 0, eta > 0, eps in (0, 1] and
    alpha = beta * pi**2 / 2 - eta > 0.

    ``nonlinear=False`` switches off the cubic and quintic terms; it exists
    for closed-form oracles only.
    """

    beta: float = 1.0
    eta: float = 1.0
    kappa: float = 0.5
    eps: float = 0.1
    gamma: float = -1.0
    mu: float = -1.0
    nu: float = 1.0
    nonlinear: bool = True
    lambda_poincare: float = field(init=False)
    alpha: float = field(init=False)

    def __post_init__(self):
        for name in ("beta", "eta", "kappa", "eps", "gamma", "mu", "nu"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"model.{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"model.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "nonlinear", bool(self.nonlinear))
        object.__setattr__(self, "lambda_poincare", LAMBDA_POINCARE)
        object.__setattr__(self, "alpha", self.beta * LAMBDA_POINCARE / 2.0 - self.eta)
        if self.beta <= 0:
            raise HypothesisViolation(f"beta must be > 0 (got {self.beta})")
        if self.eta <= 0:
            raise HypothesisViolation(f"eta must be > 0 (got {self.eta})")
        if not 0.0 < self.eps <= 1.0:
            raise HypothesisViolation(f"eps must lie in (0, 1] (got {self.eps})")
        if self.alpha <= 0:
            raise HypothesisViolation(
                f"alpha = beta*pi^2/2 - eta = {self.alpha:.6g} <= 0: fast dynamics not dissipative"
            )

    def with_eps(self, eps: float) -> ModelParams:
        return replace(self, eps=eps)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


def validate_params(raw: Mapping[str, Any] | ModelParams) -> ModelParams:
    """Build a :class:`ModelParams` from a mapping, checking hypothesis (H).

    Passing an already valid ``ModelParams`` returns an equal record.
    """
    if isinstance(raw, ModelParams):
        return ModelParams(**raw.to_dict())
    known = {f.name for f in fields(ModelParams) if f.init}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown model parameters: {sorted(unknown)}")
    return ModelParams(**dict(raw))


def _as_coeffs(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim == 0:
        raise DimensionMismatch("a spectral field needs at least one mode axis")
    return arr


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex field stored by sine-basis coefficients (last axis = modes).

    Leading axes, if present, index independent replicas.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        arr = _as_coeffs(self.coeffs)
        if arr.shape[-1] < 1:
            raise DimensionMismatch("a spectral field needs n_modes >= 1")
        object.__setattr__(self, "coeffs", arr)

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def zeros(cls, n_modes: int, batch: tuple[int, ...] = ()) -> SpectralField:
        return cls(np.zeros(batch + (n_modes,), dtype=np.complex128))

    @classmethod
    def basis(cls, k: int, n_modes: int) -> SpectralField:
        """The unit field e_k (k is 1-based)."""
        if not 1 <= k <= n_modes:
            raise DimensionMismatch(f"mode {k} outside 1..{n_modes}")
        c = np.zeros(n_modes, dtype=np.complex128)
        c[k - 1] = 1.0
        return cls(c)

    @classmethod
    def from_modes(cls, modes: Mapping[int, complex], n_modes: int) -> SpectralField:
        c = np.zeros(n_modes, dtype=np.complex128)
        for k, v in modes.items():
            if not 1 <= k <= n_modes:
                raise DimensionMismatch(f"mode {k} outside 1..{n_modes}")
            c[k - 1] = v
        return cls(c)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, SpectralField):
            check_same_modes(self, other)
            return other.coeffs
        return other

    def __add__(self, other):
        return SpectralField(self.coeffs + self._other(other))

    def __sub__(self, other):
        return SpectralField(self.coeffs - self._other(other))

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and bool(np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None


@dataclass(frozen=True)
class FieldPair:
    """The (slow, fast) pair, e.g. (A, B)."""

    slow: SpectralField
    fast: SpectralField

    def __post_init__(self):
        check_same_modes(self.slow, self.fast)


def check_same_modes(u: SpectralField, v: SpectralField) -> None:
    if u.n_modes != v.n_modes:
        raise DimensionMismatch(f"n_modes differ: {u.n_modes} vs {v.n_modes}")


def mode_eigenvalues(n_modes: int) -> np.ndarray:
    """mu_k = (k pi)^2 for k = 1..n_modes."""
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    return (k * math.pi) ** 2


# Pointwise kernels on physical values.

def cubic_kernel(z: np.ndarray, p: ModelParams | None = None) -> np.ndarray:
    """z -> (i + gamma)|z|^2 z, i.e. (-1 + i)|z|^2 z for the default gamma."""
    gamma = -1.0 if p is None else p.gamma
    return complex(gamma, 1.0) * ((z.real**2 + z.imag**2) * z)


def quintic_kernel(z: np.ndarray, p: ModelParams | None = None) -> np.ndarray:
    """z -> (i nu + mu)|z|^4 z, i.e. (-1 + i)|z|^4 z for the defaults."""
    mu, nu = (-1.0, 1.0) if p is None else (p.mu, p.nu)
    mod2 = z.real**2 + z.imag**2
    return complex(mu, nu) * (mod2 * mod2 * z)


def nonlinearity_cubic(u: SpectralField, p: ModelParams | None = None, n_phys: int | None = None) -> SpectralField:
    from .spectral import sine_grid

    g = sine_grid(u.n_modes, n_phys)
    return SpectralField(g.analyse(cubic_kernel(g.synthesise(u.coeffs), p)))


def nonlinearity_quintic(u: SpectralField, p: ModelParams | None = None, n_phys: int | None = None) -> SpectralField:
    from .spectral import sine_grid

    g = sine_grid(u.n_modes, n_phys)
    return SpectralField(g.analyse(quintic_kernel(g.synthesise(u.coeffs), p)))


def coupling_slow(a: SpectralField, b: SpectralField, p: ModelParams) -> SpectralField:
    """f(A, B) = eta A + i kappa B."""
    check_same_modes(a, b)
    return SpectralField(p.eta * a.coeffs + 1j * p.kappa * b.coeffs)


def coupling_fast(a: SpectralField, b: SpectralField, p: ModelParams) -> SpectralField:
    """g(A, B) = eta B + i kappa A."""
    check_same_modes(a, b)
    return SpectralField(p.eta * b.coeffs + 1j * p.kappa * a.coeffs)


def inner_product(u: SpectralField, v: SpectralField) -> np.ndarray | float:
    """(u, v) = Re sum_k u_k conj(v_k); reduces over the mode axis only."""
    check_same_modes(u, v)
    out = np.sum((u.coeffs * np.conj(v.coeffs)).real, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def field_norms(u: SpectralField):
    """Return (L2 norm, H1 seminorm) via Parseval."""
    mod2 = u.coeffs.real**2 + u.coeffs.imag**2
    l2 = np.sqrt(np.sum(mod2, axis=-1))
    h1 = np.sqrt(np.sum(mode_eigenvalues(u.n_modes) * mod2, axis=-1))
    if np.ndim(l2) == 0:
        return float(l2), float(h1)
    return l2, h1


def squared_norms(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array version of :func:`field_norms`, squared: (||u||^2, ||u_x||^2)."""
    mod2 = coeffs.real**2 + coeffs.imag**2
    return np.sum(mod2, axis=-1), np.sum(mode_eigenvalues(coeffs.shape[-1]) * mod2, axis=-1)
