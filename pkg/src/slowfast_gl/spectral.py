"""Sine-basis transforms, the Dirichlet Laplacian and its semigroup.

Physical values live on the interior nodes x_j = j / (M + 1), j = 1..M.  On
that grid the discrete sine vectors are orthogonal, so analysis followed by
synthesis is exact on the span of the first M modes.  With M >= 3N + 1 the
product |u|^4 u of an N-mode field (frequencies up to 5N) aliases only onto
modes above N, so the projected quintic and cubic terms are exact.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NegativeTime
from .model import ModelParams, SpectralField, mode_eigenvalues


@dataclass(frozen=True, eq=False)
class SineBasisGrid:
    n_modes: int
    n_phys: int
    nodes: np.ndarray = field(init=False, repr=False)
    eigvals: np.ndarray = field(init=False, repr=False)
    _synth: np.ndarray = field(init=False, repr=False)
    _synth_kron: np.ndarray = field(init=False, repr=False)
    _analysis_kron: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if self.n_phys < 3 * self.n_modes + 1:
            raise ConfigError(f"n_phys={self.n_phys} < 3*n_modes+1={3 * self.n_modes + 1}")
        j = np.arange(1, self.n_phys + 1)
        k = np.arange(1, self.n_modes + 1)
        nodes = j / (self.n_phys + 1)
        synth = math.sqrt(2.0) * np.sin(np.pi * np.outer(k, j) / (self.n_phys + 1))
        for arr in (nodes, synth):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_synth", synth)
        object.__setattr__(self, "eigvals", mode_eigenvalues(self.n_modes))
        eye = np.eye(2)
        object.__setattr__(self, "_synth_kron", np.kron(synth, eye))
        object.__setattr__(self, "_analysis_kron", np.kron(synth.T / (self.n_phys + 1), eye))

    def synthesise(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients (..., N) -> values at the interior nodes (..., M)."""
        if coeffs.shape[-1] != self.n_modes:
            raise DimensionMismatch(f"expected {self.n_modes} modes, got {coeffs.shape[-1]}")
        return _apply_interleaved(coeffs, self._synth_kron)

    def analyse(self, values: np.ndarray) -> np.ndarray:
        """Values (..., M) -> first N sine coefficients (..., N)."""
        if values.shape[-1] != self.n_phys:
            raise DimensionMismatch(f"expected {self.n_phys} nodes, got {values.shape[-1]}")
        return _apply_interleaved(values, self._analysis_kron)


def _apply_interleaved(z: np.ndarray, kron: np.ndarray) -> np.ndarray:
    # complex (..., n) viewed as interleaved real (..., 2n); kron = real matrix (x) I_2
    z = np.ascontiguousarray(z, dtype=np.complex128)
    lead = z.shape[:-1]
    flat = z.reshape(-1, z.shape[-1]).view(np.float64)
    out = np.ascontiguousarray(flat @ kron)
    return out.view(np.complex128).reshape(lead + (kron.shape[1] // 2,))


@functools.lru_cache(maxsize=64)
def _grid(n_modes: int, n_phys: int) -> SineBasisGrid:
    return SineBasisGrid(n_modes, n_phys)


def sine_grid(n_modes: int, n_phys: int | None = None) -> SineBasisGrid:
    """Shared read-only grid; ``n_phys`` defaults to 4 * n_modes."""
    return _grid(int(n_modes), int(4 * n_modes if n_phys is None else n_phys))


def to_physical(u: SpectralField, g: SineBasisGrid) -> np.ndarray:
    return g.synthesise(u.coeffs)


def to_modes(values: np.ndarray, g: SineBasisGrid) -> SpectralField:
    return SpectralField(g.analyse(np.asarray(values)))


def linear_symbol(n_modes: int, p: ModelParams) -> np.ndarray:
    """Eigenvalues of L = (i + beta) d_xx on the sine basis: -(i + beta) mu_k."""
    return -complex(p.beta, 1.0) * mode_eigenvalues(n_modes)


def apply_laplacian_drift(u: SpectralField, p: ModelParams) -> SpectralField:
    return SpectralField(u.coeffs * linear_symbol(u.n_modes, p))


def semigroup_factors(n_modes: int, t: float, p: ModelParams) -> np.ndarray:
    if t < 0:
        raise NegativeTime(f"t must be >= 0, got {t}")
    return np.exp(linear_symbol(n_modes, p) * t)


def semigroup_apply(u: SpectralField, t: float, p: ModelParams) -> SpectralField:
    """S(t)u, applied exactly mode by mode."""
    return SpectralField(u.coeffs * semigroup_factors(u.n_modes, t, p))


def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out
