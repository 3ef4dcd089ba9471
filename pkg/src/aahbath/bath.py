"""Bath amplitudes reconstructed from a chain trajectory.

Position space:

    beta_r(t) = -i g int_0^t ds sum_n alpha_n(s)
                prod_q i^{|c_n - r_q|} J_{|c_n - r_q|}(t - s)

with ``c_n = n_c - n`` the diagonal coordinate of the site coupled to atom
``n``.  The product over axes factorizes, so a box snapshot is a handful
of matrix products per atom.  Momentum space uses the free bath phase
``exp(i (t - s) omega(k))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError
from .model import ModelConfig, bath_extent, chain_offsets, dispersion
from .propagator import Trajectory
from .special import bessel_j_orders


@dataclass(frozen=True)
class BathSnapshot:
    t: float
    region: tuple        # ((lo_1, hi_1), ..., (lo_d, hi_d)) inclusive
    field: np.ndarray
    norm_in_region: float

    def coordinates(self):
        axes = [np.arange(lo, hi + 1) for lo, hi in self.region]
        return np.meshgrid(*axes, indexing="ij")


@dataclass(frozen=True)
class MomentumSample:
    k: np.ndarray
    t: float
    beta_k: complex


def _weights(i, dt):
    w = np.full(i + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _grid_index(t, traj):
    """Bracketing grid steps and the linear weight of the upper one."""
    dt = traj.cfg.dt
    if t < -1e-12 or t > traj.times[-1] + 1e-9:
        raise ValueError(f"t = {t} outside the trajectory horizon [0, {traj.times[-1]}]")
    x = max(t, 0.0) / dt
    i = int(round(x))
    if abs(x - i) < 1e-9:
        return i, i, 0.0
    lo = int(math.floor(x))
    return lo, lo + 1, x - lo


def _axis_factors(i, traj, coords):
    """``A[n, j, x] = i^|c_n - x| J_|c_n - x|((i - j) dt)`` for ``j <= i``."""
    cfg = traj.cfg
    c = chain_offsets(cfg)
    dist = np.abs(c[:, None] - np.asarray(coords)[None, :])
    tau = (i - np.arange(i + 1)) * cfg.dt
    J = bessel_j_orders(int(dist.max()), tau)              # (order, j)
    phase = 1j ** (dist % 4)
    return phase[:, None, :] * J[dist].transpose(0, 2, 1)  # (n, j, x)


def _field_on_grid(i, traj, axes):
    cfg = traj.cfg
    if i == 0:
        return np.zeros(tuple(len(a) for a in axes), dtype=complex)
    weighted = (traj.amps[:i + 1] * _weights(i, cfg.dt)[:, None]).T   # (n, j)
    if all(np.array_equal(axes[0], a) for a in axes[1:]):
        facs = [_axis_factors(i, traj, axes[0])] * len(axes)
    else:
        facs = [_axis_factors(i, traj, a) for a in axes]
    shape = tuple(len(a) for a in axes)
    out = np.zeros(shape, dtype=complex)
    with threadpool_limits(1):
        for n in range(cfg.N_s):
            first = facs[0][n] * weighted[n][:, None]      # (j, x1)
            if cfg.d == 1:
                out += first.sum(axis=0)
            elif cfg.d == 2:
                out += first.T @ facs[1][n]
            else:
                rest = (facs[1][n][:, :, None] * facs[2][n][:, None, :]).reshape(i + 1, -1)
                out += (first.T @ rest).reshape(shape)
    return -1j * cfg.g * out


def _check_region(region, cfg):
    region = tuple((int(lo), int(hi)) for lo, hi in region)
    if len(region) != cfg.d:
        raise ValueError(f"region needs {cfg.d} axes")
    blo, bhi = bath_extent(cfg)
    for lo, hi in region:
        if lo > hi:
            raise ValueError(f"empty axis range ({lo}, {hi})")
        if lo < blo or hi > bhi:
            raise ConfigError(
                f"region axis ({lo}, {hi}) exceeds the bath extent ({blo}, {bhi})")
    return region


def bath_snapshot(t: float, region, traj: Trajectory, cfg: ModelConfig | None = None) -> BathSnapshot:
    """``beta_r(t)`` on an inclusive integer box inside the bath.

    Off-grid ``t`` interpolates linearly between the neighbouring steps.
    """
    cfg = cfg or traj.cfg
    region = _check_region(region, cfg)
    axes = [np.arange(lo, hi + 1) for lo, hi in region]
    i0, i1, w = _grid_index(t, traj)
    field = _field_on_grid(i0, traj, axes)
    if w:
        field = (1 - w) * field + w * _field_on_grid(i1, traj, axes)
    return BathSnapshot(t=float(t), region=region, field=field,
                        norm_in_region=float(np.sum(np.abs(field) ** 2)))


def beta_r(r, t: float, traj: Trajectory, cfg: ModelConfig | None = None) -> complex:
    r = np.atleast_1d(np.asarray(r, dtype=int))
    snap = bath_snapshot(t, [(x, x) for x in r], traj, cfg)
    return complex(snap.field.ravel()[0])


def _beta_k_grid(k, i, traj):
    cfg = traj.cfg
    if i == 0:
        return 0j
    c = chain_offsets(cfg)
    proj = np.exp(-1j * np.sum(k) * c)              # e^{-i k . r_n}
    s = np.arange(i + 1) * cfg.dt
    source = traj.amps[:i + 1] @ proj
    integrand = np.exp(1j * (i * cfg.dt - s) * dispersion(k)) * source
    val = np.sum(_weights(i, cfg.dt) * integrand)
    return complex(-1j * cfg.g / (2 * np.pi) ** (cfg.d / 2) * val)


def beta_k(k, t: float, traj: Trajectory, cfg: ModelConfig | None = None) -> MomentumSample:
    cfg = cfg or traj.cfg
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (cfg.d,):
        raise ValueError(f"k must have length {cfg.d}")
    if np.any(np.abs(k) > np.pi + 1e-12):
        raise ValueError("k components must lie in [-pi, pi]")
    i0, i1, w = _grid_index(t, traj)
    val = _beta_k_grid(k, i0, traj)
    if w:
        val = (1 - w) * val + w * _beta_k_grid(k, i1, traj)
    return MomentumSample(k=k, t=float(t), beta_k=val)


def light_cone_region(t: float, cfg: ModelConfig, pad: float = 10.0, clip: bool = True):
    """Box holding every site the emitted field can reach by time ``t``.

    Along each axis the Bessel kernel ``J_m(t)`` is negligible once
    ``m > t + 3 t^(1/3) + pad``.  With ``clip`` the box is cut to the bath.
    """
    c = chain_offsets(cfg)
    reach = int(math.ceil(t + 3 * t ** (1 / 3) + pad))
    lo, hi = int(c.min()) - reach, int(c.max()) + reach
    if clip:
        blo, bhi = bath_extent(cfg)
        lo, hi = max(lo, blo), min(hi, bhi)
    return tuple((lo, hi) for _ in range(cfg.d))


def diagonal_field(t: float, coords, traj: Trajectory) -> np.ndarray:
    """``beta_r`` at body-diagonal sites ``r = (x, ..., x)`` for ``x`` in ``coords``."""
    cfg = traj.cfg
    coords = np.asarray(coords, dtype=int)
    blo, bhi = bath_extent(cfg)
    if coords.min() < blo or coords.max() > bhi:
        raise ConfigError("diagonal coordinates exceed the bath extent")

    def on_grid(i):
        if i == 0:
            return np.zeros(coords.size, dtype=complex)
        weighted = (traj.amps[:i + 1] * _weights(i, cfg.dt)[:, None]).T
        A = _axis_factors(i, traj, coords)
        return -1j * cfg.g * np.einsum("nj,njx->x", weighted, A ** cfg.d)

    i0, i1, w = _grid_index(t, traj)
    out = on_grid(i0)
    if w:
        out = (1 - w) * out + w * on_grid(i1)
    return out
