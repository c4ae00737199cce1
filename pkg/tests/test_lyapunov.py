import math

import numpy as np
import pytest

from bhpseudo.dynamics import Propagator, advance
from bhpseudo.lattice import ring
from bhpseudo.lyapunov import (
    advance_tangent,
    ensemble_lyapunov,
    lyapunov_sweep,
    max_lyapunov,
    measure_sideband_growth,
    mi_increment,
    plane_wave_state,
    sideband_growth_rate,
    tangent_rhs,
)
from bhpseudo.thermal import ThermalPoint, sample_quantum_ensemble


def test_tangent_map_is_derivative_of_flow():
    graph = ring(8, g=0.7)
    prop = Propagator.build(graph, 0.02)
    rng = np.random.default_rng(0)
    a = rng.normal(size=8) + 1j * rng.normal(size=8)
    d = rng.normal(size=8) + 1j * rng.normal(size=8)
    _, dt_map = advance_tangent(a, d, prop, 50)
    h = 1e-6
    fd = (advance(a + h * d, prop, 50) - advance(a - h * d, prop, 50)) / (2 * h)
    np.testing.assert_allclose(dt_map, fd, atol=1e-6)


def test_tangent_rhs_matches_directional_derivative():
    from bhpseudo.dynamics import eom_rhs

    graph = ring(5, g=0.9)
    rng = np.random.default_rng(1)
    a = rng.normal(size=5) + 1j * rng.normal(size=5)
    d = rng.normal(size=5) + 1j * rng.normal(size=5)
    h = 1e-6
    fd = (eom_rhs(graph, a + h * d) - eom_rhs(graph, a - h * d)) / (2 * h)
    np.testing.assert_allclose(tangent_rhs(graph, a, d), fd, atol=1e-7)


def test_linear_lattice_has_zero_exponent():
    pt = ThermalPoint.from_beta_density(1.0, 1.0, 10)
    ens = sample_quantum_ensemble(pt, 4, 0)
    run = ensemble_lyapunov(ens.states, Propagator.build(ring(10), 0.05), T=50)
    np.testing.assert_allclose(run.lambdas, 0.0, atol=1e-12)


def test_stable_plane_wave_is_not_chaotic():
    m = 16
    # neutral directions grow only linearly, so the estimate decays like ln(T)/T
    lam, times, running = max_lyapunov(ring(m, g=0.4), plane_wave_state(0.0, m), T=2000, dt=0.05)
    assert lam < 0.01
    assert running[-1] < running[len(running) // 10]
    assert running.shape == times.shape


def test_chaotic_trajectory_positive_and_worker_invariant():
    pt = ThermalPoint.from_beta_density(2.0, 1.0, 12)
    ens = sample_quantum_ensemble(pt, 200, 4)
    prop = Propagator.build(ring(12, g=0.4), 0.05)
    r1 = ensemble_lyapunov(ens.states, prop, T=40, seed=2, workers=1)
    r2 = ensemble_lyapunov(ens.states, prop, T=40, seed=2, workers=2)
    assert r1.lambdas.tobytes() == r2.lambdas.tobytes()
    assert r1.mean > 0


def test_plane_wave_rejects_incommensurate_kappa():
    with pytest.raises(ValueError):
        plane_wave_state(0.3, 10)


@pytest.mark.parametrize("q_index", [4, 6, 8])
def test_sideband_growth_matches_lattice_linearization(q_index):
    m, g = 64, 0.4
    rate = measure_sideband_growth(m, q_index, g, dt=0.02, t_final=150)
    assert rate == pytest.approx(sideband_growth_rate(2 * math.pi * q_index / m, g), rel=0.02)


def test_growth_rate_formulas():
    assert mi_increment(0.0, 0.4) == 0.0
    assert mi_increment(2.0, 0.4) == 0.0
    q = np.linspace(0.01, math.pi, 400)
    assert np.max(sideband_growth_rate(q, 0.4)) == pytest.approx(2 * 0.4, rel=1e-3)


def test_sweep_rows_and_fixed_kinetic_energy():
    rows = lyapunov_sweep("M", [6, 8], g=0.4, n_samples=4, T=10, e_kin=-0.5)
    assert [r["M"] for r in rows] == [6, 8]
    for r in rows:
        assert r["E_K"] == pytest.approx(-0.5, abs=1e-8)
    rows = lyapunov_sweep("beta", [0.0, 1.0], m=6, n_samples=4, T=10)
    assert rows[0]["E_K"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        lyapunov_sweep("J", [1.0])


def _chaotic_state(m=10, seed=5):
    pt = ThermalPoint.from_beta_density(2.0, 1.0, m)
    return sample_quantum_ensemble(pt, 1, seed).states[0]


def test_exponent_is_gauge_invariant():
    # single chaotic trajectories decorrelate from their rotated copies, so compare ensemble means
    pt = ThermalPoint.from_beta_density(2.0, 1.0, 10)
    states = sample_quantum_ensemble(pt, 64, 5).states
    prop = Propagator.build(ring(10, g=0.4), 0.05)
    r1 = ensemble_lyapunov(states, prop, T=200, seed=1)
    r2 = ensemble_lyapunov(np.exp(0.7j) * states, prop, T=200, seed=1)
    assert abs(r1.mean - r2.mean) < 3 * math.hypot(r1.stderr, r2.stderr)


def test_renormalization_interval_does_not_matter():
    graph = ring(10, g=0.4)
    a = _chaotic_state()
    l1, _, _ = max_lyapunov(graph, a, T=300, tau_r=1.0)
    l2, _, _ = max_lyapunov(graph, a, T=300, tau_r=0.5)
    assert l2 == pytest.approx(l1, rel=1e-6)


def test_norm_direction_of_tangent_is_conserved():
    # Re sum conj(a) d is the linearized particle number, so it must not grow
    graph = ring(10, g=0.4)
    prop = Propagator.build(graph, 0.05)
    a = _chaotic_state()
    d = np.random.default_rng(2).normal(size=10) + 0j
    c0 = np.real(np.vdot(a, d))
    for _ in range(10):
        a, d = advance_tangent(a, d, prop, 100)
    assert np.linalg.norm(d) > 10
    assert np.real(np.vdot(a, d)) == pytest.approx(c0, rel=1e-8)
