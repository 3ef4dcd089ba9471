"""Bessel functions of the first kind and hypergeometric series.

Only the parameter ranges needed by the lattice Green functions and the
memory kernel are supported: integer orders, real non-negative arguments,
and hypergeometric series inside their unit disc.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, SeriesError

_BIG = 1e250
_SERIES_TERMS = 40


def _series_orders(nmax, x):
    """Ascending power series for ``J_0..J_nmax`` at small ``0 < x < 1``."""
    n = np.arange(nmax + 1, dtype=float)[:, None]
    half = x[None, :] / 2.0
    # leading term (x/2)^n / n! via logs; underflows cleanly to 0 for large n
    term = np.exp(n * np.log(half) - np.array([math.lgamma(k + 1.0) for k in range(nmax + 1)])[:, None])
    total = term.copy()
    q = half * half
    for k in range(_SERIES_TERMS):
        term = -term * q / ((k + 1.0) * (k + 1.0 + n))
        total += term
    return total


def _miller_orders(nmax, x):
    """Downward recurrence with ``J_0 + 2 sum J_2k = 1`` normalization."""
    top = max(nmax, float(np.max(x)))
    start = 2 * ((int(top) + 20 + int(math.sqrt(160.0 * max(top, 1.0)))) // 2)
    out = np.zeros((nmax + 1, x.size))
    j_next = np.zeros_like(x)
    j_cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        order = k - 1
        if order <= nmax:
            out[order] = j_cur
        if order > 0 and order % 2 == 0:
            norm += 2.0 * j_cur
        big = np.abs(j_cur) > _BIG
        if np.any(big):
            scale = np.where(big, 1.0 / _BIG, 1.0)
            j_cur *= scale
            j_next *= scale
            norm *= scale
            out *= scale
    norm += j_cur
    return out / norm


def bessel_j_orders(nmax: int, x) -> np.ndarray:
    """``J_0(x) .. J_nmax(x)`` for every entry of ``x``.

    Returns an array of shape ``(nmax + 1,) + x.shape``.  Arguments below 1
    use the power series, the rest Miller's downward recurrence (the
    recurrence is seeded far above both ``nmax`` and ``x`` and rescaled on
    overflow).
    """
    if nmax < 0 or int(nmax) != nmax:
        raise ValueError("nmax must be a non-negative integer")
    nmax = int(nmax)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError("bessel_j needs finite x >= 0")
    flat = x.ravel()
    out = np.zeros((nmax + 1, flat.size))
    # below 1e-300 J_0 = 1 and the rest vanish to double precision
    zero = flat < 1e-300
    small = (flat >= 1e-300) & (flat < 1.0)
    large = flat >= 1.0
    out[0, zero] = 1.0
    if np.any(small):
        out[:, small] = _series_orders(nmax, flat[small])
    if np.any(large):
        out[:, large] = _miller_orders(nmax, flat[large])
    return out.reshape((nmax + 1,) + x.shape)


def bessel_j(order: int, x):
    """Bessel function of the first kind ``J_order(x)``, ``x >= 0``."""
    if order < 0 or int(order) != order:
        raise ValueError("order must be a non-negative integer")
    x = np.asarray(x, dtype=float)
    val = bessel_j_orders(int(order), x)[int(order)]
    return float(val) if val.ndim == 0 else val


# ------------------------------------------------------- hypergeometric


def _nonpositive_integer(v) -> bool:
    return v <= 0 and float(v) == math.floor(v)


def hyp_pfq(upper, lower, z, *, tol=1e-15, max_terms=100_000, full_output=False):
    """Generalized hypergeometric series ``pFq(upper; lower; z)``.

    Terms are generated from their ratio and summed until a term falls
    below ``tol`` times the partial sum (after the denominators have all
    turned positive).  The magnitude of that last term is the error
    estimate.

    Raises
    ------
    DomainError
        ``|z| >= 1`` or a lower parameter is a non-positive integer.
    SeriesError
        No convergence within ``max_terms``.
    """
    upper = [float(a) for a in upper]
    lower = [float(b) for b in lower]
    z = complex(z)
    if abs(z) >= 1.0:
        raise DomainError(f"series needs |z| < 1, got |z| = {abs(z):.6g}")
    for b in lower:
        if _nonpositive_integer(b):
            raise DomainError(f"lower parameter {b} is a non-positive integer")
    settle = max([0.0] + [-b for b in lower]) + 1.0
    term = 1.0 + 0.0j
    total = 1.0 + 0.0j
    for k in range(max_terms):
        num = 1.0
        for a in upper:
            num *= a + k
        den = k + 1.0
        for b in lower:
            den *= b + k
        term = term * (num / den) * z
        total += term
        if term == 0:
            break
        if k >= settle and abs(term) < tol * abs(total):
            break
    else:
        raise SeriesError(f"no convergence in {max_terms} terms", total, abs(term))
    if full_output:
        return total, abs(term)
    return total


def hyp2f1(a, b, c, z, **kwargs):
    """Gauss hypergeometric series ``2F1(a, b; c; z)`` for ``|z| < 1``."""
    return hyp_pfq([a, b], [c], z, **kwargs)
