"""Exact single-excitation dynamics of chain plus finite periodic bath.

The full Hamiltonian is built explicitly on ``N_s + N_b^d`` states and
propagated with a Chebyshev expansion of ``exp(-i H t)``.  A dense
eigendecomposition route is kept for small baths as a second, independent
reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy import special as sp

from .errors import ConfigError, NumericalError
from .model import ModelConfig, atom_site_map, bath_extent, build_system_hamiltonian

MAX_BATH_SITES = 200_000
BATH_HOPPING = -0.5   # -J with 2J = 1


@dataclass(frozen=True)
class FullHamiltonian:
    matrix: sps.csr_matrix
    cfg: ModelConfig

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def bath_index(self, r) -> int:
        """Row of bath site ``r`` (row-major over the centred box)."""
        lo, _ = bath_extent(self.cfg)
        flat = 0
        for x in np.atleast_1d(r):
            flat = flat * self.cfg.N_b + (int(x) - lo)
        return self.cfg.N_s + flat


def build_full(cfg: ModelConfig) -> FullHamiltonian:
    """Chain block ``H_s``, periodic bath hopping ``-J`` and couplings ``g``."""
    if cfg.d == 3:
        raise ConfigError("the exact oracle does not support d = 3")
    n_bath = cfg.N_b ** cfg.d
    if n_bath > MAX_BATH_SITES:
        raise ConfigError(f"bath has {n_bath} sites, above the cap {MAX_BATH_SITES}")
    Ns, Nb, d = cfg.N_s, cfg.N_b, cfg.d
    lo, hi = bath_extent(cfg)

    rows, cols, vals = [], [], []
    Hs = build_system_hamiltonian(cfg)
    r, c = np.nonzero(Hs)
    rows.append(r); cols.append(c); vals.append(Hs[r, c])

    sites = np.arange(n_bath)
    coords = np.array(np.unravel_index(sites, (Nb,) * d))
    strides = Nb ** np.arange(d - 1, -1, -1)
    if Nb > 1:
        for q in range(d):
            nxt = coords.copy()
            nxt[q] = (nxt[q] + 1) % Nb
            j = strides @ nxt
            if Nb == 2:
                # both neighbours coincide; keep a single bond
                keep = coords[q] == 0
                a, b = sites[keep], j[keep]
            else:
                a, b = sites, j
            rows += [Ns + a, Ns + b]
            cols += [Ns + b, Ns + a]
            vals += [np.full(a.size, BATH_HOPPING)] * 2

    if cfg.g != 0.0:
        for n in range(1, Ns + 1):
            site = atom_site_map(n, cfg)
            if np.any(site < lo) or np.any(site > hi):
                raise ConfigError(f"atom {n} couples to {tuple(site)}, outside the bath box")
            k = int(strides @ (site - lo))
            rows += [np.array([n - 1]), np.array([Ns + k])]
            cols += [np.array([Ns + k]), np.array([n - 1])]
            vals += [np.array([cfg.g])] * 2

    dim = Ns + n_bath
    H = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(dim, dim)).tocsr()
    H.sum_duplicates()
    return FullHamiltonian(matrix=H, cfg=cfg)


def spectral_bounds(H) -> tuple[float, float]:
    """Gershgorin interval containing the spectrum."""
    A = sps.csr_matrix(H)
    diag = A.diagonal()
    radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def _chebyshev_step(A, psi, tau, center, half, tol=1e-14):
    """``exp(-i H tau) psi`` with ``H = center + half * A``."""
    x = half * tau
    n_terms = int(x + 10 * math.log(x + 2) + 20)
    while abs(sp.jv(n_terms, x)) > tol * 1e-2:
        n_terms += 10
    coef = sp.jv(np.arange(n_terms + 1), x)
    t_prev = psi
    t_cur = A @ psi
    out = coef[0] * t_prev + 2 * (-1j) * coef[1] * t_cur
    phase = -1j
    for k in range(2, n_terms + 1):
        t_prev, t_cur = t_cur, 2 * (A @ t_cur) - t_prev
        phase *= -1j
        out += 2 * phase * coef[k] * t_cur
    return np.exp(-1j * center * tau) * out


def exact_propagate(full: FullHamiltonian, psi0, times, *, max_step: float = 5.0) -> np.ndarray:
    """States ``exp(-i H t) psi0`` at ascending ``times`` (rows of the result).

    The Chebyshev series runs on the Gershgorin-rescaled spectrum; each
    interval between requested times is split into steps of at most
    ``max_step``.  Norm drift above 1e-10 triggers a retry with bounds
    inflated by 10 %.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("psi0 must be normalized")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be non-negative and ascending")
    lo, hi = spectral_bounds(full.matrix)
    for attempt in range(4):
        pad = 0.1 * attempt * max(hi - lo, 1.0)
        a, b = lo - pad, hi + pad
        center, half = 0.5 * (a + b), max(0.5 * (b - a), 1e-12)
        A = ((full.matrix - center * sps.identity(full.dimension, format="csr")) / half).tocsr()
        out = np.empty((times.size, psi0.size), dtype=complex)
        psi, now = psi0.copy(), 0.0
        for k, t in enumerate(times):
            gap = t - now
            n_sub = max(1, int(math.ceil(gap / max_step)))
            for _ in range(n_sub if gap > 0 else 0):
                psi = _chebyshev_step(A, psi, gap / n_sub, center, half)
            now = t
            out[k] = psi
        drift = np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)) if times.size else 0.0
        if drift < 1e-10:
            return out
    raise NumericalError(f"Chebyshev propagation drifted in norm by {drift:.3g}")


def dense_propagate(full: FullHamiltonian, psi0, times) -> np.ndarray:
    """Same as :func:`exact_propagate` via a dense eigendecomposition."""
    if full.dimension > 4000:
        raise ConfigError("dense propagation limited to 4000 states")
    w, V = np.linalg.eigh(full.matrix.toarray())
    c = V.T @ np.asarray(psi0, dtype=complex)
    return np.array([(V * np.exp(-1j * w * t)) @ c for t in np.asarray(times, float)])


def chain_initial(cfg: ModelConfig, n0: int, full: FullHamiltonian | None = None) -> np.ndarray:
    dim = cfg.N_s + cfg.N_b ** cfg.d if full is None else full.dimension
    psi = np.zeros(dim, dtype=complex)
    psi[n0 - 1] = 1.0
    return psi


def recurrence_time(cfg: ModelConfig) -> float:
    """Time for a wavefront at the maximal group velocity ``d`` to cross half the box."""
    return cfg.N_b / (2.0 * cfg.d)
