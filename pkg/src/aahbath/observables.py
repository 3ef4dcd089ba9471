"""Derived quantities of chain trajectories and bath snapshots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathSnapshot
from .model import ModelConfig
from .propagator import Trajectory

PEAK_FLOOR = 1e-8


@dataclass(frozen=True)
class FitResult:
    exponent_or_slope: float
    intercept: float
    r_squared: float
    window: tuple


def linear_fit(x, y, window=None) -> FitResult:
    """Least squares ``y = a x + b``; ``window`` restricts ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y)
    if window is not None:
        keep &= (x >= window[0]) & (x <= window[1])
    x, y = x[keep], y[keep]
    if x.size < 2:
        raise ValueError("a fit needs at least two points")
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(icpt), float(min(max(r2, 0.0), 1.0)),
                     (float(x[0]), float(x[-1])))


# ---------------------------------------------------------------- chain


def revival_probability(traj: Trajectory, n0: int) -> np.ndarray:
    if not 1 <= n0 <= traj.amps.shape[1]:
        raise ValueError(f"n0 = {n0} outside the chain")
    return np.abs(traj.amps[:, n0 - 1]) ** 2


def ipr(traj: Trajectory) -> np.ndarray:
    """``sum_n |alpha_n|^4`` without renormalizing by the surviving norm."""
    return np.sum(np.abs(traj.amps) ** 4, axis=1)


def ipr_normalized(traj: Trajectory) -> np.ndarray:
    """IPR of the conditional chain state (diagnostic only)."""
    p = np.abs(traj.amps) ** 2
    norm = p.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sum(p ** 2, axis=1) / norm ** 2
    out[norm <= 1e-12] = np.nan
    return out


def position_variance(traj: Trajectory) -> np.ndarray:
    """Variance of the site index under ``|alpha_n|^2`` (NaN once leaked)."""
    p = np.abs(traj.amps) ** 2
    n = np.arange(1, p.shape[1] + 1)
    norm = p.sum(axis=1)
    out = np.full(norm.shape, np.nan)
    ok = norm > 1e-12
    mean = (p[ok] @ n) / norm[ok]
    out[ok] = np.sum(p[ok] * (n[None, :] - mean[:, None]) ** 2, axis=1) / norm[ok]
    return out


def first_peak(series, times, floor: float = PEAK_FLOOR):
    """Earliest strict local maximum above ``floor`` as ``(p_f, tau_f)``.

    A maximum at the first sample counts when it exceeds the next one.
    Interior maxima are refined by a parabola through three samples.
    Returns ``None`` when no such maximum exists.
    """
    p = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if p.size >= 2 and p[0] > floor and p[0] > p[1]:
        return float(p[0]), float(t[0])
    inner = (p[1:-1] > p[:-2]) & (p[1:-1] > p[2:]) & (p[1:-1] > floor)
    hits = np.flatnonzero(inner)
    if hits.size == 0:
        return None
    i = hits[0] + 1
    a, b, c = p[i - 1], p[i], p[i + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    h = t[i + 1] - t[i]
    return float(b - 0.25 * (a - c) * shift), float(t[i] + shift * h)


def site_first_peak(traj: Trajectory, n: int, floor: float = PEAK_FLOOR):
    return first_peak(np.abs(traj.amps[:, n - 1]) ** 2, traj.times, floor)


def wavefront_velocity(traj: Trajectory, n0: int, sites=None):
    """Fit ``tau_f`` against ``|n - n0|``; returns ``(velocity, fit, table)``.

    ``table`` rows are ``(n, |n - n0|, p_f, tau_f)`` for sites with a peak.
    """
    if sites is None:
        sites = [n for n in range(1, traj.amps.shape[1] + 1) if n != n0]
    table = []
    for n in sites:
        peak = site_first_peak(traj, n)
        if peak is not None:
            table.append((n, abs(n - n0), peak[0], peak[1]))
    if len(table) < 2:
        raise ValueError("fewer than two sites show a first peak")
    arr = np.array(table, dtype=float)
    fit = linear_fit(arr[:, 1], arr[:, 3])
    return 1.0 / fit.exponent_or_slope, fit, table


# ---------------------------------------------------------- decay shape


@dataclass(frozen=True)
class DecayShape:
    label: str            # exponential | super_exponential | stable | irregular
    fit: FitResult
    truncated: bool
    drop: float
    curvature: float


def decay_shape(series, times, window=(5.0, 100.0), *, r2_exponential: float = 0.98,
                block: float | None = None) -> DecayShape:
    """Classify a revival series on ``window``.

    Order of tests: ``stable`` (mean of the last quarter within 5 % of the
    first quarter), ``exponential`` (log-linear r^2 above
    ``r2_exponential``), ``super_exponential`` (negative curvature of
    ``log p`` larger than three times the residual noise of a quadratic
    fit).  Anything else is ``irregular``.  Non-positive samples cut the
    window at the first one; ``truncated`` flags this.

    ``block`` (diagnostic, off by default) replaces the samples by means
    over consecutive blocks of that duration before any test, which
    removes fast coherent oscillations from the fit.
    """
    p = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    p, t = p[sel], t[sel]
    truncated = False
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        p, t = p[:bad[0]], t[:bad[0]]
        truncated = True
    if p.size < 20:
        raise ValueError(f"decay_shape needs at least 20 positive samples, got {p.size}")
    if block:
        per = max(int(round(block / (t[1] - t[0]))), 1)
        nb = p.size // per
        if nb < 4:
            raise ValueError("block averaging leaves fewer than four points")
        p = p[:nb * per].reshape(nb, per).mean(axis=1)
        t = t[:nb * per].reshape(nb, per).mean(axis=1)
    q = max(p.size // 4, 1)
    drop = 1.0 - p[-q:].mean() / p[:q].mean()
    logp = np.log(p)
    fit = linear_fit(t, logp)
    c2, c1, c0 = np.polyfit(t, logp, 2)
    noise = np.std(logp - np.polyval([c2, c1, c0], t))
    half_span = 0.5 * (t[-1] - t[0])
    curvature = c2 * half_span ** 2
    if abs(drop) < 0.05:
        label = "stable"
    elif fit.r_squared >= r2_exponential:
        label = "exponential"
    elif curvature < 0 and -curvature > 3 * noise:
        label = "super_exponential"
    else:
        label = "irregular"
    return DecayShape(label=label, fit=fit, truncated=truncated, drop=float(drop),
                      curvature=float(curvature))


# ----------------------------------------------------------------- bath


def snapshot_variance(snap: BathSnapshot, cfg: ModelConfig) -> float:
    """``(1/N_b^2) * var(x)`` under ``|beta_r|^2``, ``x`` the first axis."""
    w = np.abs(snap.field) ** 2
    total = w.sum()
    if total <= 0:
        return float("nan")
    lo, hi = snap.region[0]
    x = np.arange(lo, hi + 1, dtype=float)
    wx = w.reshape(w.shape[0], -1).sum(axis=1)
    mean = np.sum(x * wx) / total
    return float(np.sum((x - mean) ** 2 * wx) / total / cfg.N_b ** 2)


def bath_variance(snapshots, cfg: ModelConfig, window=None):
    """Variance series over snapshots plus a log-log fit giving ``nu``."""
    snaps = sorted(snapshots, key=lambda s: s.t)
    if len(snaps) < 4:
        raise ValueError("need at least four snapshot times")
    times = np.array([s.t for s in snaps])
    values = np.array([snapshot_variance(s, cfg) for s in snaps])
    ok = np.isfinite(values) & (values > 0) & (times > 0)
    if window is not None:
        ok &= (times >= window[0]) & (times <= window[1])
    fit = linear_fit(np.log(times[ok]), np.log(values[ok]))
    fit = FitResult(fit.exponent_or_slope, fit.intercept, fit.r_squared,
                    (float(times[ok][0]), float(times[ok][-1])))
    return times, values, fit
