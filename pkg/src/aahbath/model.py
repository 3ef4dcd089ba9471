"""Physical parameters, the closed AAH chain, bath dispersion and geometry.

All energies are measured in units of the bath bandwidth scale ``2J = 1``
and times in units of ``(2J)^-1``.  Chain sites are 1-based.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# config-file key -> dataclass field
_KEY_ALIASES = {"lambda": "lam"}
_FIELD_KEYS = {"lam": "lambda"}


@dataclass(frozen=True)
class ModelConfig:
    """Chain, bath and coupling parameters (units ``2J = 1``)."""

    N_s: int = 21
    lam: float = 1.0
    Delta: float = 1.0
    beta: float = GOLDEN
    phi: float = -0.6 * math.pi
    d: int = 1
    g: float = 0.1
    N_b: int = 201
    dt: float = 0.02
    t_max: float = 200.0

    def __post_init__(self):
        if int(self.N_s) != self.N_s or self.N_s < 1:
            raise ConfigError(f"N_s must be a positive integer, got {self.N_s!r}")
        if int(self.N_b) != self.N_b or self.N_b < 1:
            raise ConfigError(f"N_b must be a positive integer, got {self.N_b!r}")
        if self.d not in (1, 2, 3):
            raise ConfigError(f"d must be 1, 2 or 3, got {self.d!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max!r}")
        for name in ("lam", "Delta", "beta", "phi", "g", "dt", "t_max"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        object.__setattr__(self, "N_s", int(self.N_s))
        object.__setattr__(self, "N_b", int(self.N_b))
        object.__setattr__(self, "d", int(self.d))

    @property
    def n_steps(self) -> int:
        """Number of time steps ``T`` with ``T * dt = t_max``."""
        return int(round(self.t_max / self.dt))

    @property
    def center(self) -> int:
        """Index of the atom sitting at the bath origin."""
        if self.N_s % 2 == 0:
            raise ConfigError("even N_s has no central atom")
        return (self.N_s + 1) // 2

    def replace(self, **changes) -> "ModelConfig":
        changes = {_KEY_ALIASES.get(k, k): v for k, v in changes.items()}
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Canonical flat ``key = value`` serialization."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            key = _FIELD_KEYS.get(f.name, f.name)
            lines.append(f"{key} = {value!r}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


_NUMBER_PI = re.compile(r"^([-+]?[0-9.eE+-]*?)\s*\*?\s*pi$")


def parse_value(text: str) -> float:
    """Parse a float, also accepting multiples of pi such as ``-0.6pi``."""
    text = text.strip()
    m = _NUMBER_PI.match(text)
    if m:
        coeff = m.group(1)
        if coeff in ("", "+"):
            return math.pi
        if coeff == "-":
            return -math.pi
        return float(coeff) * math.pi
    return float(text)


def parse_kv(text: str) -> dict[str, str]:
    """Split flat ``key = value`` text into a dict; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_from_mapping(values: dict, base: ModelConfig | None = None) -> ModelConfig:
    """Build a config from string/number values; unknown keys are an error."""
    base = base or ModelConfig()
    names = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    changes = {}
    for key, value in values.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if name in ("N_s", "N_b", "d"):
                number = parse_value(value) if isinstance(value, str) else value
                if int(number) != number:
                    raise ValueError
                changes[name] = int(number)
            else:
                changes[name] = parse_value(value) if isinstance(value, str) else float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return dataclasses.replace(base, **changes)


def load_config(path, **overrides) -> ModelConfig:
    """Read a flat config file; keyword overrides win over file values."""
    values = parse_kv(Path(path).read_text())
    cfg = config_from_mapping(values)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return config_from_mapping(overrides, cfg) if overrides else cfg


# ---------------------------------------------------------------- chain


def onsite_potential(n, cfg: ModelConfig):
    """Quasiperiodic on-site energy ``Delta cos(2 pi beta n + phi)``."""
    return cfg.Delta * np.cos(2.0 * np.pi * cfg.beta * np.asarray(n, dtype=float) + cfg.phi)


def build_system_hamiltonian(cfg: ModelConfig) -> np.ndarray:
    """Open-boundary AAH chain Hamiltonian (tridiagonal, real symmetric)."""
    n = np.arange(1, cfg.N_s + 1)
    H = np.diag(onsite_potential(n, cfg))
    if cfg.N_s > 1:
        off = np.full(cfg.N_s - 1, float(cfg.lam))
        H += np.diag(off, 1) + np.diag(off, -1)
    return H


@dataclass(frozen=True)
class ClosedSpectrum:
    energies: np.ndarray
    states: np.ndarray

    def ipr(self) -> np.ndarray:
        """Inverse participation ratio of every eigenvector."""
        return np.sum(np.abs(self.states) ** 4, axis=0)


def closed_spectrum(H) -> ClosedSpectrum:
    """Full eigendecomposition with a deterministic sign convention.

    Eigenvalues ascend; each eigenvector is flipped so that its first
    component with magnitude above 1e-12 is positive.
    """
    H = np.asarray(H, dtype=float)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for matrix\n{H!r}") from exc
    V = V.copy()
    for q in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, q]) > 1e-12)
        if nz.size and V[nz[0], q] < 0:
            V[:, q] *= -1.0
    return ClosedSpectrum(energies=w, states=V)


# ----------------------------------------------------------------- bath


def dispersion(k, cfg: ModelConfig | None = None):
    """Bath band ``omega(k) = sum_q cos k_q`` (``2J = 1``).

    ``k`` may carry a trailing axis of length ``d``; the sum runs over it.
    """
    k = np.asarray(k, dtype=float)
    if cfg is not None and k.shape[-1:] != (cfg.d,):
        raise ValueError(f"k must have trailing length d={cfg.d}")
    return np.sum(np.cos(k), axis=-1)


def atom_site_map(n, cfg: ModelConfig) -> np.ndarray:
    """Bath site coupled to atom ``n``: ``(n_c - n) * (1, ..., 1)``.

    The chain lies on the body diagonal with the central atom at the
    origin, so atom 1 sits at ``(10, ..., 10)`` for ``N_s = 21``.
    """
    if cfg.N_s % 2 == 0:
        raise ConfigError("atom_site_map needs odd N_s (no central atom otherwise)")
    if not 1 <= n <= cfg.N_s:
        raise ValueError(f"atom index {n} outside 1..{cfg.N_s}")
    return np.full(cfg.d, cfg.center - n, dtype=int)


def chain_offsets(cfg: ModelConfig) -> np.ndarray:
    """Diagonal coordinate ``n_c - n`` for every atom, in atom order."""
    if cfg.N_s % 2 == 0:
        raise ConfigError("atom_site_map needs odd N_s (no central atom otherwise)")
    return cfg.center - np.arange(1, cfg.N_s + 1)


def bath_extent(cfg: ModelConfig) -> tuple[int, int]:
    """Inclusive coordinate range of the bath box along each axis."""
    lo = -(cfg.N_b // 2)
    return lo, lo + cfg.N_b - 1
