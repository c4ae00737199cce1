import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bhpseudo.dynamics import Propagator, advance, eom_rhs, evolve_ensemble, sample_steps, strang_step
from bhpseudo.lattice import ring, two_rings_chain
from bhpseudo.lyapunov import plane_wave_state
from bhpseudo.thermal import Ensemble


def _reference(graph, a0, t):
    # independent oracle: adaptive RK on the real-valued equations of motion
    def f(_, y):
        a = y[: graph.n_sites] + 1j * y[graph.n_sites :]
        d = eom_rhs(graph, a)
        return np.concatenate([d.real, d.imag])

    sol = solve_ivp(f, (0, t), np.concatenate([a0.real, a0.imag]), method="DOP853", rtol=1e-12, atol=1e-12)
    y = sol.y[:, -1]
    return y[: graph.n_sites] + 1j * y[graph.n_sites :]


def test_matches_adaptive_reference_with_second_order_error():
    graph = two_rings_chain(4, 2, 0.3, g=0.7, g_chain=0.2)
    rng = np.random.default_rng(0)
    a0 = rng.normal(size=graph.n_sites) + 1j * rng.normal(size=graph.n_sites)
    ref = _reference(graph, a0, 2.0)
    errs = []
    for dt in (0.02, 0.01):
        a = advance(a0, Propagator.build(graph, dt), int(round(2.0 / dt)))
        errs.append(np.max(np.abs(a - ref)))
    assert errs[1] < 1e-3
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_fused_advance_equals_repeated_steps():
    graph = ring(7, g=0.5)
    prop = Propagator.build(graph, 0.03)
    a0 = np.exp(1j * np.arange(7) * 0.4) * (1 + 0.1 * np.arange(7))
    a = a0.copy()
    for _ in range(25):
        a = strang_step(a, prop)
    np.testing.assert_allclose(advance(a0, prop, 25), a, atol=1e-12)


def test_linear_flow_is_exact():
    graph = ring(9)
    prop = Propagator.build(graph, 0.01)
    a0 = np.zeros(9, complex)
    a0[0] = 1
    a = advance(a0, prop, 500)
    w, v = np.linalg.eigh(-0.5 * (np.roll(np.eye(9), 1, 0) + np.roll(np.eye(9), -1, 0)))
    exact = v @ (np.exp(-1j * w * 5.0) * (v.conj().T @ a0))
    np.testing.assert_allclose(a, exact, atol=1e-12)


def test_plane_wave_phase():
    m, g = 16, 0.4
    kappa = 2 * np.pi * 3 / m
    prop = Propagator.build(ring(m, g=g), 0.01)
    a = advance(plane_wave_state(kappa, m), prop, 1000)
    np.testing.assert_allclose(a, plane_wave_state(kappa, m, 10.0, g), atol=1e-10)


def test_norm_and_energy_conservation():
    from bhpseudo.lattice import classical_energy

    graph = ring(12, g=0.8)
    rng = np.random.default_rng(3)
    a0 = rng.normal(size=(4, 12)) + 1j * rng.normal(size=(4, 12))
    a = advance(a0, Propagator.build(graph, 0.01), 5000)
    n0, n1 = np.sum(np.abs(a0) ** 2, 1), np.sum(np.abs(a) ** 2, 1)
    assert np.max(np.abs(n1 - n0) / n0) < 1e-12
    e0, e1 = classical_energy(graph, a0)[0], classical_energy(graph, a)[0]
    assert np.max(np.abs(e1 - e0) / np.abs(e0)) < 1e-3


def test_sample_steps_snaps_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        steps, notes = sample_steps([0.0, 0.1, 0.125], 0.05)
    assert list(steps) == [0, 2, 2] or list(steps) == [0, 2, 3]
    assert len(notes) == 1 and caught


def test_sample_steps_rejects_decreasing_times():
    with pytest.raises(ValueError):
        sample_steps([1.0, 0.5], 0.1)


def test_worker_count_does_not_change_results():
    graph = ring(6, g=0.4)
    rng = np.random.default_rng(1)
    ens = Ensemble(rng.normal(size=(300, 6)) + 1j * rng.normal(size=(300, 6)), seed=0)
    prop = Propagator.build(graph, 0.05)
    s1 = evolve_ensemble(ens, prop, [0, 1, 2], workers=1)
    s2 = evolve_ensemble(ens, prop, [0, 1, 2], workers=2)
    assert s1.states.tobytes() == s2.states.tobytes()
    np.testing.assert_array_equal(s1.final_states, s1.states[-1])


def test_mismatched_ensemble_rejected():
    ens = Ensemble(np.zeros((2, 5), complex), seed=0)
    with pytest.raises(ValueError):
        evolve_ensemble(ens, Propagator.build(ring(6), 0.1), [0, 1])
