r"""Lattice Green function of the d-dimensional simple lattice bath.

The quantity is

.. math::
    f_d(m; e) = \frac{1}{(2\pi)^d}\int_{[-\pi,\pi]^d} d^dk\,
                \frac{e^{i m (k_1 + \dots + k_d)}}{e + \sum_q \cos k_q},

i.e. the propagator between two bath sites separated by ``m`` steps along
the body diagonal.  For ``Im e > 0`` it equals the Laplace-Bessel integral

.. math::
    f_d(m; e) = -i \int_0^\infty ds\, e^{i e s}\,[i^{m} J_{m}(s)]^d .

We evaluate that integral on a deformed contour: the real segment
``[0, s0]`` followed by rays on which each Hankel component of ``J_m^d``
decays exponentially.  The same contour defines the analytic continuation
through the band from above (the ``"continued"`` sheet) which carries the
decaying resonances.  The ``"physical"`` sheet is the k-space integral
itself and obeys ``f(conj e) = conj f(e)``.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import integrate, special as sp

from .errors import DomainError, SingularInputError
from .special import bessel_j_orders, hyp2f1, hyp_pfq

SHEETS = ("physical", "continued")


@dataclass(frozen=True)
class GreenValue:
    value: complex
    method: str
    est_error: float


def van_hove_points(d: int) -> np.ndarray:
    """Real energies where the bath density of states is singular."""
    return np.arange(-d, d + 1, 2, dtype=float)


def _check_sheet(sheet):
    if sheet not in SHEETS:
        raise ValueError(f"sheet must be one of {SHEETS}, got {sheet!r}")


def _check_energy(e: complex, d: int, tol=1e-14):
    if not (math.isfinite(e.real) and math.isfinite(e.imag)):
        raise DomainError(f"energy must be finite, got {e}")
    if abs(e.imag) <= tol and abs(abs(e.real) - d) <= tol:
        raise SingularInputError(
            f"e = {e.real} sits on the band edge |e| = {d}; f_d diverges there")


def _complex_quad(func, a, b, **kw):
    # QUADPACK warns on round-off near 1e-12; the error estimate is returned
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re, err_re = integrate.quad(lambda x: func(x).real, a, b, **kw)
        im, err_im = integrate.quad(lambda x: func(x).imag, a, b, **kw)
    return complex(re, im), math.hypot(err_re, err_im)


def _ray_angle(w: complex) -> float:
    """Direction in which ``exp(i w s)`` decays without oscillating."""
    theta = math.pi / 2 - cmath.phase(w)
    theta = (theta + math.pi) % (2 * math.pi) - math.pi
    # keep away from the Hankel cut on the negative real axis
    return max(-0.75 * math.pi, min(0.75 * math.pi, theta))


def _continued(e: complex, m: int, d: int, tol: float) -> tuple[complex, float]:
    s0 = m + 4.0
    phase = (1j ** m) ** d
    opts = dict(epsabs=tol, epsrel=tol, limit=400)

    def seg(s):
        return cmath.exp(1j * e * s) * sp.jv(m, s) ** d

    total, err = _complex_quad(seg, 0.0, s0, **opts)
    for j in range(d + 1):
        w = e + (2 * j - d)
        if abs(w) < 1e-12 or (e.imag <= 0 and abs(w.real) < 1e-12):
            raise SingularInputError(
                f"e = {e} sits on the van Hove point {-(2 * j - d)}")
        u = cmath.exp(1j * _ray_angle(w))
        lead = cmath.exp(1j * w * s0) * comb(d, j) / 2 ** d * u

        def ray(rho, j=j, w=w, u=u):
            s = s0 + rho * u
            return (sp.hankel1e(m, s) ** j * sp.hankel2e(m, s) ** (d - j)
                    * cmath.exp(1j * w * rho * u))

        val, err_j = _complex_quad(ray, 0.0, math.inf, **opts)
        total += lead * val
        err += abs(lead) * err_j
    return -1j * phase * total, err


def green_quadrature(e, m: int, d: int, *, sheet: str = "physical",
                     tol: float = 1e-12) -> GreenValue:
    """Lattice Green function by adaptive contour quadrature.

    Parameters
    ----------
    e : complex
        Energy in units of ``2J``.
    m : int
        Diagonal offset; only ``|m|`` matters.
    d : int
        Bath dimension.
    sheet : {"physical", "continued"}
        ``"physical"`` is the k-space integral (for real in-band ``e`` the
        limit from ``Im e -> 0^-``).  ``"continued"`` is the continuation
        from ``Im e > 0`` through the band segment directly above ``e``.

    Raises
    ------
    SingularInputError
        Band edge, or a van Hove point reached from below.
    """
    _check_sheet(sheet)
    e = complex(e)
    m = abs(int(m))
    _check_energy(e, d)
    inside = abs(e.real) < d
    flip = sheet == "physical" and inside and e.imag <= 0.0
    if sheet == "physical" and not inside and e.imag < 0.0:
        flip = True
    if flip:
        val, err = _continued(e.conjugate(), m, d, tol)
        val = val.conjugate()
    else:
        val, err = _continued(e, m, d, tol)
    return GreenValue(value=val, method="quadrature", est_error=err)


# ------------------------------------------------------------ closed forms


def _closed_d1(e, m):
    if isinstance(e, complex) and e.imag != 0.0:
        raise DomainError("the d=1 closed form is only defined for real e")
    e = float(e.real if isinstance(e, complex) else e)
    if abs(e) <= 1.0:
        raise DomainError("d=1 closed form needs real |e| > 1; use green_quadrature")
    root = math.sqrt(e * e - 1.0)
    return math.pi / root * math.copysign(1.0, e) / (abs(e) + root) ** m, 0.0


def _closed_d2(e, m):
    z = 4.0 / (e * e)
    if abs(z) >= 1.0:
        raise DomainError("d=2 closed form needs |4/e^2| < 1; use green_quadrature")
    series, err = hyp_pfq([1, 1, 1, 1.5, 1.5], [1.5 + m, 1.5 - m, 1.5, 1.5], z,
                          full_output=True)
    pre = -16.0 * math.cos(m * math.pi) / (math.pi ** 2 * (4 * m * m - 1) * e * e)
    return pre * series, abs(pre) * err


def _closed_d3(e, m):
    root9 = cmath.sqrt(1.0 - 9.0 / (e * e))
    root1 = cmath.sqrt(1.0 - 1.0 / (e * e))
    base = 4 * e * e + (9 - 4 * e * e) * root9
    eta_p = (base + 27 * root1) / (8 * e * e)
    eta_m = (base - 27 * root1) / (8 * e * e)
    if abs(eta_p) >= 1.0 or abs(eta_m) >= 1.0:
        raise DomainError("d=3 closed form needs |eta_pm| < 1; use green_quadrature")
    log_ratio = math.lgamma(3 * m + 1) - 3 * (m * math.log(3.0) + math.lgamma(m + 1))
    pre = (-1) ** m / e * math.exp(log_ratio) * (e / 3 * (1 - root9)) ** (3 * m)
    fp, ep = hyp2f1(1 / 3, 2 / 3, m + 1, eta_p, full_output=True)
    fm, em = hyp2f1(1 / 3, 2 / 3, m + 1, eta_m, full_output=True)
    val = pre * fp * fm
    return val, abs(pre) * (ep * abs(fm) + em * abs(fp))


def green_closed(e, m: int, d: int) -> GreenValue:
    """Closed-form lattice Green function, transcribed term by term.

    The d=1 expression carries an extra factor ``pi`` and lacks the
    ``(-1)^m`` sign of the k-space integral for ``e > 0``; the d=2
    expression does not reproduce the k-space integral at all.  Both are
    kept verbatim for comparison; only d=3 is a faithful accelerator.
    Real ``|e| > d`` is always inside the valid region.
    """
    m = abs(int(m))
    if d == 1:
        val, err = _closed_d1(e, m)
    elif d == 2:
        val, err = _closed_d2(complex(e), m)
    elif d == 3:
        val, err = _closed_d3(complex(e), m)
    else:
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    return GreenValue(value=complex(val), method="closed_form", est_error=float(err))


def green_exact_d1(e, m: int, *, sheet: str = "physical") -> complex:
    """Exact d=1 Green function ``(-1)^m z^|m| / sqrt(e^2 - 1)``.

    Used as an analytic reference and as a fast path for the d=1 chain.
    """
    _check_sheet(sheet)
    e = complex(e)
    _check_energy(e, 1)
    conj = False
    if abs(e.real) < 1.0:
        if sheet == "physical" and e.imag <= 0.0:
            e, conj = e.conjugate(), True
        root = 1j * cmath.sqrt(1.0 - e * e)
    else:
        if sheet == "physical" and e.imag < 0.0:
            e, conj = e.conjugate(), True
        root = cmath.sqrt(e - 1.0) * cmath.sqrt(e + 1.0)
    m = abs(int(m))
    val = (-1) ** m * (e - root) ** m / root
    return val.conjugate() if conj else val


# -------------------------------------------------------- batch evaluator


def _gauss_panels(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    return ((b - a) / 2 * x + (a + b) / 2).ravel(), ((b - a) / 2 * w).ravel()


class GreenEvaluator:
    """Fixed-node evaluation of ``f_d(0..m_max; e)`` for many energies.

    The contour is the one used by :func:`green_quadrature` with a common
    split point ``s0 = m_max + 4`` and vertical rays.  Hankel tables are
    built once; each energy then costs a few matrix-vector products.  The
    ray length adapts to the decay rate ``|Re e + k|`` (``k`` running over
    the van Hove points); closer than ``~40 / r_max`` to a van Hove line
    the truncated tail limits accuracy.
    """

    PANEL = 8.0
    ORDER = 12

    def __init__(self, d: int, m_max: int, r_max: float = 3000.0, chunk: int = 2048):
        if d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        self.d = d
        self.m_max = int(m_max)
        self.chunk = chunk
        self.s0 = self.m_max + 4.0
        m = np.arange(self.m_max + 1)
        phase = (1j ** m) ** d

        n_seg = int(math.ceil(self.s0))
        self._s, ws = _gauss_panels(np.linspace(0.0, self.s0, n_seg + 1), 16)
        J = bessel_j_orders(self.m_max, self._s)  # (m, s)
        self._seg = (ws[:, None] * (J.T ** d)) * (-1j * phase)[None, :]

        edges = np.concatenate([[0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
                                np.arange(2 * self.PANEL, r_max + 1e-9, self.PANEL)])
        self._rho, wr = _gauss_panels(edges, self.ORDER)
        self._panel_end = edges[1:]
        self._tables = {}
        # direction 0 runs along the real axis, +-1 straight up or down
        self._dirs = {1: 1j, -1: -1j, 0: 1.0}
        for key, u in self._dirs.items():
            s = self.s0 + u * self._rho
            h1 = sp.hankel1e(m[None, :], s[:, None])
            h2 = sp.hankel2e(m[None, :], s[:, None])
            for j in range(d + 1):
                coef = comb(d, j) / 2 ** d * (-1j) * phase * u
                self._tables[key, j] = (wr[:, None] * h1 ** j * h2 ** (d - j)) * coef[None, :]

    def _nodes_needed(self, rate):
        reach = np.minimum(40.0 / np.maximum(rate, 1e-300), self._panel_end[-1])
        panels = np.searchsorted(self._panel_end, reach) + 1
        panels = np.minimum(panels, self._panel_end.size)
        # round up to a power of two so few distinct sizes occur
        bucket = 2 ** np.ceil(np.log2(panels)).astype(int)
        return np.minimum(bucket, self._panel_end.size) * self.ORDER

    def continued(self, E) -> np.ndarray:
        """Values on the continued sheet, shape ``E.shape + (m_max + 1,)``."""
        E = np.asarray(E, dtype=complex)
        flat = E.ravel()
        out = np.empty((flat.size, self.m_max + 1), dtype=complex)
        for start in range(0, flat.size, self.chunk):
            block = flat[start:start + self.chunk]
            out[start:start + block.size] = self._block(block)
        return out.reshape(E.shape + (self.m_max + 1,))

    def _block(self, E):
        val = np.exp(1j * np.outer(E, self._s)) @ self._seg
        for j in range(self.d + 1):
            k = 2 * j - self.d
            w = E + k
            flat = w.imag > np.abs(w.real)
            sigma = np.where(flat, 0, np.where(w.real > 0, 1, -1))
            need = self._nodes_needed(np.where(flat, w.imag, np.abs(w.real)))
            for sg in (1, -1, 0):
                for n in np.unique(need[sigma == sg]):
                    rows = np.flatnonzero((sigma == sg) & (need == n))
                    s = self.s0 + self._dirs[sg] * self._rho[:n]
                    X = np.exp(1j * np.outer(w[rows], s))
                    val[rows] += X @ self._tables[sg, j][:n]
        return val

    def __call__(self, E, sheet: str = "physical") -> np.ndarray:
        _check_sheet(sheet)
        E = np.asarray(E, dtype=complex)
        if sheet == "continued":
            return self.continued(E)
        inside = np.abs(E.real) < self.d
        flip = (E.imag < 0) | (inside & (E.imag == 0))
        out = self.continued(np.where(flip, E.conj(), E))
        out[flip] = out[flip].conj()
        return out
