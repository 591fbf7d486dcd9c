"""Study configuration: flat ``section.key = value`` text files and their resolved form."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .ergodics import ErgodicConfig
from .errors import ConfigError
from .model import ModelParams, validate_params
from .noise import NoiseSpec

STUDIES = ("convergence", "khasminskii", "holder", "contraction", "mixing", "moments", "inequalities", "selftest")

_DEFAULT_EPS = {
    "convergence": (0.5, 0.2, 0.05, 0.01),
    "khasminskii": (0.1,),
    "holder": (0.1,),
    "moments": (0.5, 0.1, 0.02),
}


@dataclass(frozen=True)
class GridConfig:
    n_modes: int = 32
    n_phys: int | None = None
    t_end: float = 1.0
    h: float | None = None
    stride: int = 5
    c_fast: float = 0.1

    def __post_init__(self):
        if self.n_modes < 1:
            raise ConfigError("grid.n_modes must be >= 1")
        if self.n_phys is not None and self.n_phys < 3 * self.n_modes + 1:
            raise ConfigError("grid.n_phys must be >= 3 * n_modes + 1")
        if not self.t_end > 0 or (self.h is not None and not self.h > 0):
            raise ConfigError("grid.t_end and grid.h must be > 0")
        if self.stride < 1 or not self.c_fast > 0:
            raise ConfigError("grid.stride must be >= 1 and grid.c_fast > 0")


@dataclass(frozen=True)
class NoiseConfig:
    sigma1: float = 0.5
    sigma2: float = 0.5
    q_decay: float = 2.0
    complex_increments: bool = False
    exact_complex_convolution: bool = False

    def spec(self, n_modes: int) -> NoiseSpec:
        q = 1.0 / np.arange(1, n_modes + 1, dtype=np.float64) ** self.q_decay
        return NoiseSpec(self.sigma1, self.sigma2, q, q.copy(), self.complex_increments, self.exact_complex_convolution)


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to reproduce a study.

    ``deltas=None`` selects the delta = sqrt(eps) rule.  ``eps_list=None`` picks
    the study's default list.  Study-specific knobs: ``trials`` (contraction,
    mixing paths and inequality sizes scale), ``t0`` and ``lag_k`` (holder).
    """

    study: str = "selftest"
    eps_list: tuple[float, ...] | None = None
    deltas: tuple[float, ...] | None = None
    p_order: float = 1.0
    mc_samples: int = 100
    master_seed: int = 0
    model: ModelParams = field(default_factory=ModelParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    ergodic: ErgodicConfig = field(default_factory=ErgodicConfig)
    trials: int = 10
    t0: float = 0.5
    lag_k: tuple[int, int] = (4, 9)
    chunk_size: int = 25
    out_path: str | None = None
    workers: int = 1
    timings: bool = False

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {', '.join(STUDIES)}")
        eps = self.eps_list if self.eps_list is not None else _DEFAULT_EPS.get(self.study, (self.model.eps,))
        eps = tuple(float(e) for e in eps)
        if not eps or any(not (0 < e <= 1) for e in eps):
            raise ConfigError(f"eps_list entries must lie in (0, 1], got {eps}")
        if list(eps) != sorted(eps, reverse=True) or len(set(eps)) != len(eps):
            raise ConfigError(f"eps_list must be strictly descending, got {eps}")
        object.__setattr__(self, "eps_list", eps)
        if self.deltas is not None:
            d = tuple(float(x) for x in self.deltas)
            if not d or any(not (x > 0 and math.isfinite(x)) for x in d):
                raise ConfigError("deltas must be positive")
            object.__setattr__(self, "deltas", d)
        if not (self.p_order > 0 and math.isfinite(self.p_order)):
            raise ConfigError("p must be > 0")
        if self.mc_samples < 2:
            raise ConfigError("samples must be >= 2 (needed for confidence intervals)")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be in [0, 2**64)")
        if self.workers < 1 or self.chunk_size < 1 or self.trials < 1:
            raise ConfigError("workers, chunk_size and trials must be >= 1")
        if not self.lag_k[0] <= self.lag_k[1]:
            raise ConfigError("holder.lag_k must be ascending")

    @property
    def noise_spec(self) -> NoiseSpec:
        return self.noise.spec(self.grid.n_modes)

    def resolved(self) -> dict[str, Any]:
        """Full config as plain data; everything that can change the numbers."""
        return {
            "study": self.study,
            "eps_list": list(self.eps_list),
            "deltas": "sqrt_eps" if self.deltas is None else list(self.deltas),
            "p_order": self.p_order,
            "mc_samples": self.mc_samples,
            "master_seed": self.master_seed,
            "model": self.model.to_dict(),
            "noise": _plain(self.noise),
            "grid": _plain(self.grid),
            "ergodic": self.ergodic.to_dict(),
            "trials": self.trials,
            "t0": self.t0,
            "lag_k": list(self.lag_k),
            "chunk_size": self.chunk_size,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


# --- text format ------------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none", "auto") else int(s)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def parse_deltas(s: str) -> tuple[float, ...] | None:
    return None if s.strip().lower() in ("sqrt", "sqrt_eps") else _floats(s)


_STUDY_KEYS = {
    "name": ("study", str),
    "eps_list": ("eps_list", _floats),
    "delta": ("deltas", parse_deltas),
    "p": ("p_order", float),
    "samples": ("mc_samples", int),
    "seed": ("master_seed", int),
    "out": ("out_path", str),
    "workers": ("workers", int),
    "chunk_size": ("chunk_size", int),
    "timings": ("timings", _bool),
    "trials": ("trials", int),
    "t0": ("t0", float),
    "lag_k": ("lag_k", lambda s: tuple(int(x) for x in s.split(","))),
}
_GRID_KEYS = {"n_modes": int, "n_phys": _opt_int, "t_end": float, "h": _opt_float, "stride": int, "c_fast": float}
_NOISE_KEYS = {"sigma1": float, "sigma2": float, "q_decay": float, "complex_increments": _bool,
               "exact_complex_convolution": _bool}
_MODEL_KEYS = {"beta": float, "eta": float, "kappa": float, "eps": float, "gamma": float, "mu": float, "nu": float,
               "nonlinear": _bool}
_ERGODIC_KEYS = {"burn_in_multiplier": float, "t_average": _opt_float, "replicas": int, "h_micro": float,
                 "cache_threshold": float, "n_batches": int}


def read_flat(text: str) -> dict[str, str]:
    """Parse ``section.key = value`` lines (``#`` or ``;`` comments) into a flat dict."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[_]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return dict(cp["_"])


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return read_flat(path.read_text(encoding="utf-8"))


def build_config(flat: Mapping[str, str], **overrides) -> StudyConfig:
    """Turn flat dotted keys (strings) plus typed keyword overrides into a :class:`StudyConfig`."""
    sections: dict[str, dict[str, Any]] = {"study": {}, "grid": {}, "noise": {}, "model": {}, "ergodic": {}}
    tables = {"grid": _GRID_KEYS, "noise": _NOISE_KEYS, "model": _MODEL_KEYS, "ergodic": _ERGODIC_KEYS}
    for key, raw in flat.items():
        sec, _, name = key.partition(".")
        try:
            if sec == "study" and name in _STUDY_KEYS:
                target, conv = _STUDY_KEYS[name]
                sections["study"][target] = conv(raw)
            elif sec in tables and name in tables[sec]:
                sections[sec][name] = tables[sec][name](raw)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    kw = sections["study"]
    kw.update({k: v for k, v in overrides.items() if v is not None})
    model = validate_params(sections["model"])
    return StudyConfig(model=model, noise=NoiseConfig(**sections["noise"]), grid=GridConfig(**sections["grid"]),
                       ergodic=ErgodicConfig(**sections["ergodic"]), **kw)


def with_overrides(cfg: StudyConfig, **kw) -> StudyConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
