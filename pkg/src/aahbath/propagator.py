"""Chain amplitudes under the full bath memory.

Integrates

    d alpha_n / dt = -i (H_s alpha)_n
                     - g^2 sum_m i^{d|n-m|} int_0^t J_{|n-m|}(t-s)^d alpha_m(s) ds

on a uniform grid.  The history integral is a trapezoid over all stored
steps.  Time stepping is Heun's predictor-corrector applied in the
interaction picture of ``H_s`` (the free chain evolution is exact), so
the decoupled limit ``g = 0`` reproduces ``exp(-i H_s t)`` to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, PropagationError
from .model import ModelConfig, build_system_hamiltonian
from .special import bessel_j_orders


@dataclass(frozen=True)
class KernelTable:
    K: np.ndarray        # (N_s, T + 1) real, J_dn(i dt)^d
    phase: np.ndarray    # (N_s,) complex, i^(d dn)
    dt: float
    d: int

    def full(self) -> np.ndarray:
        return self.phase[:, None] * self.K


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    amps: np.ndarray     # (T + 1, N_s)
    cfg: ModelConfig

    def at(self, t: float) -> np.ndarray:
        """Amplitudes at ``t`` by linear interpolation between grid points."""
        if not 0.0 <= t <= self.times[-1] + 1e-12:
            raise ValueError(f"t = {t} outside the trajectory horizon")
        x = t / self.cfg.dt
        i = min(int(np.floor(x)), len(self.times) - 2)
        w = x - i
        return (1 - w) * self.amps[i] + w * self.amps[i + 1]


def build_kernel_table(cfg: ModelConfig, n_steps: int | None = None) -> KernelTable:
    T = cfg.n_steps if n_steps is None else n_steps
    t = np.arange(T + 1) * cfg.dt
    K = bessel_j_orders(cfg.N_s - 1, t) ** cfg.d
    phase = (1j ** np.arange(cfg.N_s)) ** cfg.d
    return KernelTable(K=K, phase=phase, dt=cfg.dt, d=cfg.d)


def _initial(cfg, n0, alpha0):
    if (n0 is None) == (alpha0 is None):
        raise ValueError("give exactly one of n0 and alpha0")
    if alpha0 is None:
        if not 1 <= n0 <= cfg.N_s:
            raise ConfigError(f"n0 = {n0} outside 1..{cfg.N_s}")
        a = np.zeros(cfg.N_s, dtype=complex)
        a[n0 - 1] = 1.0
        return a
    a = np.asarray(alpha0, dtype=complex)
    if a.shape != (cfg.N_s,):
        raise ValueError(f"alpha0 must have length {cfg.N_s}")
    if abs(np.linalg.norm(a) - 1.0) > 1e-10:
        raise ValueError("alpha0 must be normalized")
    return a


def _propagate(cfg, a0, table):
    N, dt, T, g2 = cfg.N_s, cfg.dt, cfg.n_steps, cfg.g ** 2
    w, V = np.linalg.eigh(build_system_hamiltonian(cfg))
    U = (V * np.exp(-1j * w * dt)) @ V.T
    dn = np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
    P = table.phase[dn]
    cols = np.arange(N)[None, :]
    # reversed kernel so that Krev[:, T - k] = K[:, k]; history rows are then
    # a contiguous slice
    Krev = np.ascontiguousarray(table.K[:, ::-1])

    amps = np.zeros((T + 1, N), dtype=complex)
    amps[0] = a0

    def history(i):
        """dt * [K_i a_0 / 2 + sum_{j=1}^{i-1} K_{i-j} a_j], phased and summed."""
        if i == 0 or g2 == 0:
            return np.zeros(N, dtype=complex)
        ker = Krev[:, T - i:T]           # K[:, i..1] for j = 0..i-1
        C = ker @ amps[:i] - 0.5 * np.outer(ker[:, 0], amps[0])
        return dt * np.sum(P * C[dn, cols], axis=1)

    def force(h, a):
        return -g2 * (h + 0.5 * dt * a)   # K[0, 0] = 1 closes the trapezoid

    h = history(0)
    for i in range(T):
        f_i = force(h, amps[i])
        h_next = history(i + 1)
        pred = U @ (amps[i] + dt * f_i)
        new = U @ (amps[i] + 0.5 * dt * f_i) + 0.5 * dt * force(h_next, pred)
        if not np.all(np.isfinite(new)):
            raise PropagationError(
                f"non-finite amplitude at step {i + 1}", step=i + 1, time=(i + 1) * dt)
        amps[i + 1] = new
        h = h_next
    return amps


def propagate(cfg: ModelConfig, n0: int | None = None, alpha0=None, *,
              convergence_check: bool = False, table: KernelTable | None = None) -> Trajectory:
    """Evolve the chain from a site ``n0`` (1-based) or a normalized ``alpha0``.

    With ``convergence_check`` a second run at ``dt / 2`` is made and a
    :class:`PropagationError` raised when the final norms differ by more
    than 1e-4.
    """
    a0 = _initial(cfg, n0, alpha0)
    table = table or build_kernel_table(cfg)
    if table.K.shape[1] < cfg.n_steps + 1 or table.dt != cfg.dt:
        raise ValueError("kernel table does not cover the configured horizon")
    with threadpool_limits(1):
        amps = _propagate(cfg, a0, table)
    traj = Trajectory(times=np.arange(cfg.n_steps + 1) * cfg.dt, amps=amps, cfg=cfg)
    if convergence_check:
        half = propagate(cfg.replace(dt=cfg.dt / 2), alpha0=a0)
        gap = abs(system_norm(half)[-1] - system_norm(traj)[-1])
        if gap > 1e-4:
            raise PropagationError(
                f"dt = {cfg.dt} too large: halving changes the final norm by {gap:.3g}",
                step=cfg.n_steps, time=cfg.t_max)
    return traj


def system_norm(traj: Trajectory) -> np.ndarray:
    return np.sum(np.abs(traj.amps) ** 2, axis=1)


def step_halving_order(cfg: ModelConfig, n0: int = 1) -> float:
    """Observed convergence order from runs at dt, dt/2 and dt/4."""
    runs = [propagate(cfg.replace(dt=cfg.dt / 2 ** k), n0=n0) for k in range(3)]
    stride = [1, 2, 4]
    a = [r.amps[::s] for r, s in zip(runs, stride)]
    e1 = np.max(np.abs(a[0] - a[1]))
    e2 = np.max(np.abs(a[1] - a[2]))
    return float(np.log2(e1 / e2))
