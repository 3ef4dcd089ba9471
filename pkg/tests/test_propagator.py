import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import jv

from aahbath import oracle
from aahbath.errors import ConfigError, PropagationError
from aahbath.model import ModelConfig, build_system_hamiltonian
from aahbath.propagator import (
    build_kernel_table, propagate, step_halving_order, system_norm,
)


def test_kernel_examples():
    tab = build_kernel_table(ModelConfig(d=2, t_max=2.0))
    assert tab.K[0, 0] == 1.0
    assert tab.K[5, 0] == 0.0
    assert tab.K[1, 50] == pytest.approx(jv(1, 1.0) ** 2, abs=1e-14)
    assert tab.K[1, 50] == pytest.approx(0.19365, abs=1e-5)
    assert np.allclose(tab.phase[:4], [1, -1, 1, -1])
    tab3 = build_kernel_table(ModelConfig(d=3, t_max=2.0))
    assert np.allclose(tab3.phase[:4], [1, -1j, -1, 1j])
    t = np.arange(tab3.K.shape[1]) * tab3.dt
    assert np.allclose(tab3.K[7], jv(7, t) ** 3, atol=1e-15)


@pytest.mark.parametrize("Delta", [1.0, 3.0])
def test_decoupled_limit(Delta):
    cfg = ModelConfig(Delta=Delta, g=0.0, t_max=20.0)
    traj = propagate(cfg, n0=4)
    H = build_system_hamiltonian(cfg)
    a0 = np.zeros(21)
    a0[3] = 1
    for k in (0, 1, 137, 1000):
        want = expm(-1j * H * traj.times[k]) @ a0
        assert np.max(np.abs(traj.amps[k] - want)) < 1e-8


def test_linearity():
    cfg = ModelConfig(d=2, t_max=5.0)
    rng = np.random.default_rng(1)
    u = rng.normal(size=21) + 1j * rng.normal(size=21)
    v = rng.normal(size=21) + 1j * rng.normal(size=21)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    a, b = 0.6, 0.8j
    w = a * u + b * v
    w /= np.linalg.norm(w)
    scale = np.linalg.norm(a * u + b * v)
    tu, tv, tw = (propagate(cfg, alpha0=x).amps for x in (u, v, w))
    assert np.max(np.abs(scale * tw - (a * tu + b * tv))) < 1e-8


def test_step_halving_order():
    assert step_halving_order(ModelConfig(t_max=20.0, d=2), n0=1) >= 1.8


def test_convergence_flag():
    with pytest.raises(PropagationError) as info:
        propagate(ModelConfig(N_s=5, g=0.5, dt=0.25, t_max=20.0), n0=1,
                  convergence_check=True)
    assert info.value.time == pytest.approx(20.0)
    propagate(ModelConfig(N_s=5, t_max=5.0), n0=1, convergence_check=True)


def test_bad_initial_states():
    cfg = ModelConfig(t_max=1.0)
    with pytest.raises(ConfigError):
        propagate(cfg, n0=22)
    with pytest.raises(ValueError):
        propagate(cfg, alpha0=np.ones(21))
    with pytest.raises(ValueError):
        propagate(cfg)


def test_trajectory_interpolation():
    traj = propagate(ModelConfig(t_max=1.0), n0=1)
    assert np.allclose(traj.at(0.5), traj.amps[25])
    assert np.allclose(traj.at(0.51), 0.5 * (traj.amps[25] + traj.amps[26]))
    with pytest.raises(ValueError):
        traj.at(1.5)


def test_norm_starts_at_one_and_leaks():
    traj = propagate(ModelConfig(d=3, t_max=20.0), n0=1)
    norm = system_norm(traj)
    assert norm[0] == 1.0
    assert np.all(norm <= 1 + 1e-9)
    assert norm[-1] < 0.999


def test_single_emitter_matches_oracle():
    cfg = ModelConfig(N_s=1, Delta=0.0, g=0.1, N_b=201, t_max=80.0)
    traj = propagate(cfg, n0=1)
    full = oracle.build_full(cfg)
    steps = np.arange(0, cfg.n_steps + 1, 200)
    exact = oracle.exact_propagate(full, oracle.chain_initial(cfg, 1, full), steps * cfg.dt)
    assert np.max(np.abs(traj.amps[steps, 0] - exact[:, 0])) < 1e-3
    assert np.abs(traj.amps[-1, 0]) ** 2 < 0.9


@pytest.mark.slow
def test_localized_edge_survives():
    traj = propagate(ModelConfig(Delta=3.0), n0=1)
    assert np.min(np.abs(traj.amps[:, 0]) ** 2) > 0.5
