"""Reduced chain eigenproblem after eliminating the bath.

Stationary amplitudes obey ``M(e) alpha = 0`` with

    M_nj(e) = (H_s)_nj + g^2 f_d(|n - j|; e) - e delta_nj .

Real roots outside the band ``[-d, d]`` are bound states.  Complex roots
below the real axis are decaying resonances; they live on the sheet of
``f_d`` continued downward through the band, which is therefore the
default for complex energies here (the k-space sheet has no roots off the
real axis because ``Im M`` is definite there).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import SingularInputError
from .green import GreenEvaluator, green_exact_d1, green_quadrature
from .model import ClosedSpectrum, ModelConfig, build_system_hamiltonian, closed_spectrum

DEFAULT_SHEET = "continued"
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class ReducedMatrix:
    entries: np.ndarray
    e: complex
    cfg: ModelConfig


def _offsets(n):
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :])


def green_row(e, cfg: ModelConfig, sheet: str = DEFAULT_SHEET) -> np.ndarray:
    """``f_d(0..N_s-1; e)`` from the adaptive quadrature (d=1: exact form)."""
    if cfg.d == 1:
        return np.array([green_exact_d1(e, m, sheet=sheet) for m in range(cfg.N_s)])
    return np.array([green_quadrature(e, m, cfg.d, sheet=sheet).value
                     for m in range(cfg.N_s)])


def assemble(e, f_row, cfg: ModelConfig, Hs=None) -> np.ndarray:
    Hs = build_system_hamiltonian(cfg) if Hs is None else Hs
    M = Hs + cfg.g ** 2 * np.asarray(f_row)[_offsets(cfg.N_s)]
    return M - e * np.eye(cfg.N_s)


def reduced_matrix(e, cfg: ModelConfig, *, sheet: str = DEFAULT_SHEET) -> ReducedMatrix:
    """Reduced coefficient matrix at energy ``e`` (units ``2J``)."""
    e = complex(e)
    if e.imag == 0.0 and abs(abs(e.real) - cfg.d) < 1e-14:
        raise SingularInputError(f"e = {e.real} is a band edge")
    M = assemble(e, green_row(e, cfg, sheet), cfg)
    return ReducedMatrix(entries=M, e=e, cfg=cfg)


def log_det(M) -> complex:
    """``log|det M| + i arg det M`` from a row-pivoted LU factorization.

    Returns ``-inf`` (real part) for an exactly singular matrix.
    """
    A = M.entries if isinstance(M, ReducedMatrix) else np.asarray(M)
    A = np.asarray(A, dtype=complex)
    if not A.size:
        return 0j
    with warnings.catch_warnings():
        # an exactly singular matrix is a legitimate answer here
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return complex(-math.inf, 0.0)
    swaps = int(np.sum(piv != np.arange(piv.size)))
    phase = np.sum(np.angle(diag)) + math.pi * (swaps % 2)
    phase = (phase + math.pi) % (2 * math.pi) - math.pi
    return complex(np.sum(np.log(np.abs(diag))), phase)


def det_residual(A) -> float:
    """``|det A|`` divided by the Hadamard bound (product of row norms)."""
    A = np.asarray(A)
    ld = log_det(A).real
    rows = np.linalg.norm(A, axis=1)
    if np.any(rows == 0):
        return 0.0
    return float(math.exp(ld - np.sum(np.log(rows))))


def overlaps(vector, closed: ClosedSpectrum) -> np.ndarray:
    """Weights ``|<closed_q|v>|^2`` of a normalized vector."""
    v = np.asarray(vector)
    return np.abs(closed.states.T @ v) ** 2


def null_vector(A, seed, iters: int = 50, tol: float = 1e-13) -> np.ndarray:
    """Inverse iteration for the (near) null vector of ``A``."""
    lu = sla.lu_factor(np.asarray(A, dtype=complex), check_finite=False)
    x = np.asarray(seed, dtype=complex)
    x = x / np.linalg.norm(x)
    for _ in range(iters):
        with np.errstate(all="ignore"):
            y = sla.lu_solve(lu, x, check_finite=False)
        if not np.all(np.isfinite(y)):
            # exactly singular pivot: perturb the factorization slightly
            lu = sla.lu_factor(np.asarray(A, complex) + 1e-14 * np.eye(len(x)), check_finite=False)
            continue
        y = y / np.linalg.norm(y)
        k = np.flatnonzero(np.abs(y) > 1e-12)[0]
        y = y * (abs(y[k]) / y[k])  # fix the global phase
        done = np.linalg.norm(y - x) < tol
        x = y
        if done:
            break
    return x


# ------------------------------------------------------------- evaluation


class _Green:
    """Green rows for batches (fast tables) and single points (exact)."""

    def __init__(self, cfg: ModelConfig, sheet: str):
        self.cfg, self.sheet = cfg, sheet
        self.ev = GreenEvaluator(cfg.d, cfg.N_s - 1) if cfg.d > 1 else None
        self.Hs = build_system_hamiltonian(cfg)

    def rows(self, E):
        E = np.asarray(E, dtype=complex)
        if self.ev is None:
            return np.array([[green_exact_d1(e, m, sheet=self.sheet)
                              for m in range(self.cfg.N_s)] for e in E.ravel()]
                            ).reshape(E.shape + (self.cfg.N_s,))
        return self.ev(E, sheet=self.sheet)

    def matrix(self, e, exact=False):
        e = complex(e)
        if exact or self.ev is None:
            f = green_row(e, self.cfg, self.sheet)
        else:
            f = self.rows(np.array([e]))[0]
        return assemble(e, f, self.cfg, self.Hs)

    def batch_matrices(self, E):
        F = self.rows(E)
        M = self.cfg.g ** 2 * F[..., _offsets(self.cfg.N_s)] + self.Hs
        M -= E[..., None, None] * np.eye(self.cfg.N_s)
        return M


# ---------------------------------------------------------- bound states


@dataclass(frozen=True)
class BoundState:
    e: float
    vector: np.ndarray
    overlaps: np.ndarray
    residual: float


@dataclass(frozen=True)
class Resonance:
    e: complex
    vector: np.ndarray
    residual: float
    overlaps: np.ndarray


@dataclass
class SpectrumResult:
    bound_states: list
    resonances: list
    scan_region: tuple
    grid: dict
    unresolved: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    mesh: tuple | None = None    # (re axis, im axis, det on the mesh)

    def table(self):
        """One record per root: e_re, e_im, class, residual, top-3 overlaps."""
        rows = []
        for kind, items in (("bound", self.bound_states), ("resonance", self.resonances)):
            for r in items:
                e = complex(r.e)
                top = np.argsort(r.overlaps)[::-1][:3]
                rec = [e.real, e.imag, kind, r.residual]
                for q in top:
                    rec += [int(q) + 1, float(r.overlaps[q])]
                rows.append(rec)
        rows.sort(key=lambda rec: (rec[0], rec[1]))
        return rows

    TABLE_COLUMNS = ("e_re", "e_im", "class", "residual",
                     "q1", "p1", "q2", "p2", "q3", "p3")


def _default_real_ranges(cfg, margin):
    reach = cfg.d + 2 * abs(cfg.lam) + abs(cfg.Delta) + 1.0 + cfg.g ** 2 * 4
    return [(-reach, -cfg.d - margin), (cfg.d + margin, reach)]


def _real_det_sign(src, xs):
    M = src.batch_matrices(xs.astype(complex))
    sign, _ = np.linalg.slogdet(M.real)
    return sign


def find_bound_states(cfg: ModelConfig, e_range=None, *, n_grid: int = 2000,
                      margin: float = 1e-3, closed: ClosedSpectrum | None = None):
    """Real roots of ``det M(e)`` with ``|e| > d``.

    The determinant is real there.  Sign changes on a uniform grid are
    bisected to ``|de| < 1e-12``; the null vector comes from inverse
    iteration seeded by the closed eigenvector of nearest energy.
    Intervals holding more than one root are detected by regridding.
    """
    if e_range is None:
        ranges = _default_real_ranges(cfg, margin)
    else:
        lo, hi = sorted(map(float, e_range))
        if lo < cfg.d + margin and hi > -cfg.d - margin:
            raise ValueError(f"e_range must avoid [-d - {margin}, d + {margin}]")
        ranges = [(lo, hi)]
    closed = closed or closed_spectrum(build_system_hamiltonian(cfg))
    src = _Green(cfg, "physical")
    notes = []
    roots = []
    for lo, hi in ranges:
        xs = np.linspace(lo, hi, n_grid)
        sign = _real_det_sign(src, xs)
        brackets = list(np.flatnonzero(sign[:-1] * sign[1:] < 0))
        hits = [(xs[i], xs[i + 1]) for i in brackets]
        # consecutive sign flips hint at closely spaced roots: look closer
        if any(b - a == 1 for a, b in zip(brackets, brackets[1:])):
            notes.append(f"refined grid on [{lo}, {hi}]")
            xs = np.linspace(lo, hi, 10 * n_grid)
            sign = _real_det_sign(src, xs)
            hits = [(xs[i], xs[i + 1]) for i in np.flatnonzero(sign[:-1] * sign[1:] < 0)]
        roots += [_bisect(src, a, b) for a, b in hits]
    out = []
    for e in sorted(roots):
        A = src.matrix(e, exact=True).real
        seed = closed.states[:, np.argmin(np.abs(closed.energies - e))]
        v = null_vector(A, seed).real
        v /= np.linalg.norm(v)
        out.append(BoundState(e=float(e), vector=v, overlaps=overlaps(v, closed),
                              residual=det_residual(A)))
    return out


def _bisect(src, a, b, tol=1e-12):
    def sgn(x):
        return np.linalg.slogdet(src.matrix(x).real)[0]

    sa = sgn(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        sm = sgn(mid)
        if sm == 0:
            return mid
        if sm == sa:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


# ------------------------------------------------------------ resonances


def _cell_candidates(D):
    """Cells where both Re det and Im det change sign on the boundary."""
    def changes(part):
        s = np.sign(part)
        h = s[:, :-1] * s[:, 1:] <= 0   # along Re e
        v = s[:-1, :] * s[1:, :] <= 0   # along Im e
        return h[:-1, :] | h[1:, :] | v[:, :-1] | v[:, 1:]
    return np.argwhere(changes(D.real) & changes(D.imag))


def _local_minima(L):
    inner = L[1:-1, 1:-1]
    mask = np.ones_like(inner, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= inner <= L[1 + di:L.shape[0] - 1 + di, 1 + dj:L.shape[1] - 1 + dj]
    return np.argwhere(mask) + 1


def _newton(src, e, h=1e-7, max_iter=60, cap=0.05, tol=1e-12):
    """Damped Newton on ``det M(e)`` with a central-difference slope."""
    def det(z):
        return np.linalg.det(src.matrix(z))

    cur = det(e)
    for _ in range(max_iter):
        slope = (det(e + h) - det(e - h)) / (2 * h)
        if not np.isfinite(slope) or slope == 0:
            return None
        step = cur / slope
        if abs(step) > cap:
            step *= cap / abs(step)
        for _ in range(12):
            trial = e - step
            new = det(trial)
            if abs(new) < abs(cur) or abs(step) < 1e-10:
                break
            step *= 0.5
        e, cur = trial, new
        if abs(step) < tol or cur == 0:
            return e
        if abs(e.imag) > 5 or abs(e.real) > 10:
            return None
    return None


def scan_complex_roots(cfg: ModelConfig, region=None, grid_n=(400, 200), *,
                       sheet: str = DEFAULT_SHEET, closed: ClosedSpectrum | None = None,
                       extra_seeds=True, residual_tol: float = RESIDUAL_TOL) -> SpectrumResult:
    """Complex roots of ``det M(e)`` in ``region = (re_lo, re_hi, im_lo, im_hi)``.

    ``det`` is sampled at cell centres of a ``grid_n = (n_re, n_im)`` mesh.
    Candidates are cells where both the real and the imaginary part of
    ``det`` change sign, plus (``extra_seeds``) local minima of ``|det|``
    and the closed eigenvalues inside the band.  Each candidate is refined
    by damped Newton; roots closer than 1e-8 are merged.  Every accepted
    root is re-checked with a matrix built from the adaptive quadrature.
    """
    d = cfg.d
    if region is None:
        region = (-float(d), float(d), -0.5, 0.0)
    re_lo, re_hi, im_lo, im_hi = map(float, region)
    if im_hi > 1e-12:
        raise ValueError("scan region must lie in Im e <= 0")
    if isinstance(grid_n, int):
        grid_n = (grid_n, grid_n)
    nx, ny = grid_n
    closed = closed or closed_spectrum(build_system_hamiltonian(cfg))
    src = _Green(cfg, sheet)

    hx, hy = (re_hi - re_lo) / nx, (im_hi - im_lo) / ny
    xs = re_lo + hx * (np.arange(nx) + 0.5)
    ys = im_lo + hy * (np.arange(ny) + 0.5)
    E = xs[None, :] + 1j * ys[:, None]
    D = np.empty(E.shape, dtype=complex)
    for i in range(ny):
        D[i] = np.linalg.det(src.batch_matrices(E[i]))

    seeds = [E[i, j] + 0.5 * (hx + 1j * hy) for i, j in _cell_candidates(D)]
    if extra_seeds:
        seeds += [E[i, j] for i, j in _local_minima(np.log(np.abs(D) + 1e-300))]
        inside = closed.energies[(closed.energies > re_lo) & (closed.energies < re_hi)]
        seeds += list(inside - 1e-4j)

    found, unresolved = [], []
    for s in seeds:
        r = _newton(src, complex(s))
        if r is None:
            unresolved.append(complex(s))
            continue
        if not (re_lo <= r.real <= re_hi and im_lo <= r.imag <= 1e-12):
            continue
        if any(abs(r - q) < 1e-8 for q in found):
            continue
        found.append(r)

    resonances = []
    for r in sorted(found, key=lambda z: (z.real, z.imag)):
        if r.imag > 0:
            r = complex(r.real, 0.0)
        A = src.matrix(r, exact=True)
        res = det_residual(A)
        if res > residual_tol:
            unresolved.append(r)
            continue
        seed = closed.states[:, np.argmin(np.abs(closed.energies - r.real))]
        v = null_vector(A, seed)
        v /= np.linalg.norm(v)
        resonances.append(Resonance(e=r, vector=v, residual=res,
                                    overlaps=overlaps(v, closed)))
    return SpectrumResult(bound_states=[], resonances=resonances,
                          scan_region=(re_lo, re_hi, im_lo, im_hi),
                          grid={"n_re": nx, "n_im": ny, "sheet": sheet,
                                "seeds": len(seeds)},
                          unresolved=unresolved, mesh=(xs, ys, D))


def spectrum(cfg: ModelConfig, *, grid_n=(400, 200), region=None) -> SpectrumResult:
    """Bound states plus resonances for one configuration."""
    closed = closed_spectrum(build_system_hamiltonian(cfg))
    res = scan_complex_roots(cfg, region, grid_n, closed=closed)
    res.bound_states = find_bound_states(cfg, closed=closed)
    return res
