import math

import numpy as np
import pytest

from aahbath.errors import SingularInputError
from aahbath.green import green_exact_d1
from aahbath.model import ModelConfig, build_system_hamiltonian, closed_spectrum
from aahbath.spectrum import (
    det_residual, find_bound_states, log_det, null_vector, reduced_matrix,
    scan_complex_roots,
)


def test_decoupled_matrix():
    cfg = ModelConfig(g=0.0, Delta=3.0)
    M = reduced_matrix(0.3 - 0.2j, cfg).entries
    assert np.array_equal(M, build_system_hamiltonian(cfg) - (0.3 - 0.2j) * np.eye(21))


def test_single_site():
    cfg = ModelConfig(N_s=1, Delta=1.0, g=0.1)
    M = reduced_matrix(2.0, cfg).entries
    want = math.cos(2 * math.pi * cfg.beta + cfg.phi) + 0.01 * green_exact_d1(2.0, 0) - 2.0
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(want, abs=1e-15)
    assert green_exact_d1(2.0, 0) == pytest.approx(1 / math.sqrt(3), abs=1e-15)


@pytest.mark.parametrize("d,e", [(1, 0.37 - 0.11j), (2, -1.2 - 0.05j), (3, 4.0 + 0j)])
def test_matrix_symmetric(d, e):
    M = reduced_matrix(e, ModelConfig(d=d, N_s=5)).entries
    assert np.allclose(M, M.T, atol=0, rtol=0)


def test_band_edge_rejected():
    with pytest.raises(SingularInputError):
        reduced_matrix(1.0, ModelConfig(d=1))


def test_log_det_examples():
    assert log_det(np.eye(4)) == 0
    D = np.diag([2.0, -3.0, 0.5j])
    ld = log_det(D)
    assert ld.real == pytest.approx(math.log(3.0), abs=1e-15)
    assert np.exp(ld) == pytest.approx(np.linalg.det(D), abs=1e-14)
    assert log_det(np.zeros((2, 2))).real == -math.inf
    rng = np.random.default_rng(4)
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    assert np.exp(log_det(A)) == pytest.approx(np.linalg.det(A), rel=1e-12)


def test_decoupled_root_is_singular():
    cfg = ModelConfig(g=0.0, Delta=3.0)
    e = closed_spectrum(build_system_hamiltonian(cfg)).energies[3]
    A = reduced_matrix(e, cfg).entries
    assert det_residual(A) < 1e-13


def test_null_vector_recovers_eigenvector():
    cfg = ModelConfig(g=0.0, Delta=1.0)
    cl = closed_spectrum(build_system_hamiltonian(cfg))
    A = build_system_hamiltonian(cfg) - cl.energies[5] * np.eye(21)
    v = null_vector(A, np.ones(21))
    assert abs(np.vdot(v, cl.states[:, 5])) == pytest.approx(1.0, abs=1e-10)


def test_decoupled_bound_states():
    cfg = ModelConfig(g=0.0, Delta=3.0)
    cl = closed_spectrum(build_system_hamiltonian(cfg))
    outside = cl.energies[np.abs(cl.energies) > 1.0 + 1e-3]
    found = find_bound_states(cfg)
    assert np.allclose([b.e for b in found], outside, atol=1e-10)
    for b in found:
        assert np.max(b.overlaps) == pytest.approx(1.0, abs=1e-10)
        assert b.residual < 1e-10


def test_bound_states_coupled():
    cfg = ModelConfig(Delta=3.0)
    found = find_bound_states(cfg)
    assert found
    for b in found:
        assert abs(b.e) > 1
        assert b.residual < 1e-10
        assert np.isrealobj(b.vector)
        assert np.linalg.norm(b.vector) == pytest.approx(1.0)


def test_decoupled_resonances_are_closed_levels():
    cfg = ModelConfig(g=0.0, Delta=1.0)
    cl = closed_spectrum(build_system_hamiltonian(cfg))
    res = scan_complex_roots(cfg, (-1, 1, -0.05, 0), (40, 10))
    inside = cl.energies[np.abs(cl.energies) < 1]
    roots = np.array(sorted(r.e.real for r in res.resonances))
    assert np.allclose(roots, inside, atol=1e-9)
    assert all(abs(r.e.imag) < 1e-9 for r in res.resonances)


def test_resonances_lower_half_plane():
    cfg = ModelConfig(Delta=1.0)
    res = scan_complex_roots(cfg, (-1, 1, -0.3, 0), (80, 40))
    assert res.resonances
    for r in res.resonances:
        assert r.e.imag <= 1e-12
        assert r.residual < 1e-10
        # recomputed from scratch at the reported energy
        assert det_residual(reduced_matrix(r.e, cfg).entries) < 1e-10
    with pytest.raises(ValueError):
        scan_complex_roots(cfg, (-1, 1, -0.1, 0.1), (4, 4))


def test_weak_coupling_limit():
    """Roots approach the closed levels quadratically in g."""
    dist = []
    for g in (0.05, 0.025):
        cfg = ModelConfig(Delta=1.0, g=g)
        cl = closed_spectrum(build_system_hamiltonian(cfg))
        res = scan_complex_roots(cfg, (-1, 1, -0.02, 0), (20, 10))
        roots = np.array([r.e for r in res.resonances] + [b.e for b in find_bound_states(cfg)])
        dist.append(max(np.min(np.abs(roots - e)) for e in cl.energies))
    assert dist[1] < 0.01
    assert 3.0 < dist[0] / dist[1] < 5.0
