"""Maximal Lyapunov exponents, modulation instability and the plane-wave solution.

Tangent vectors are propagated with the exact Jacobian of the discrete Strang
map, so a tangent run agrees with a finite-difference pair of trajectories to
first order in the displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import Propagator, advance, map_blocks
from .lattice import SiteGraph, classical_energy, hopping_matrix, ring
from .observables import bloch_amplitudes
from .thermal import ThermalPoint, mode_energies, sample_quantum_ensemble, solve_beta_mu, trajectory_rng

__all__ = [
    "LYAPUNOV_DT",
    "TANGENT_STREAM",
    "tangent_rhs",
    "advance_tangent",
    "LyapunovRun",
    "ensemble_lyapunov",
    "max_lyapunov",
    "mi_increment",
    "sideband_growth_rate",
    "plane_wave_state",
    "measure_sideband_growth",
    "lyapunov_sweep",
]

# step used for long tangent runs; exponents agree with dt=0.01 to well under the sample spread
LYAPUNOV_DT = 0.05
TANGENT_STREAM = 1000


def tangent_rhs(graph: SiteGraph, state: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """Linearized equation of motion for a displacement ``tangent`` around ``state``."""
    a = np.asarray(state)
    d = np.asarray(tangent)
    if a.shape != d.shape or a.shape[-1] != graph.n_sites:
        raise ValueError(f"state {a.shape} and tangent {d.shape} must both have {graph.n_sites} sites")
    h = hopping_matrix(graph)
    g = graph.g_site
    dens = a.real**2 + a.imag**2
    return -1j * (d @ h + g * (2 * dens * d + a * a * d.conj()))


def _nl_pair(a, d, g, tau):
    dens = a.real**2 + a.imag**2
    ph = np.exp(-1j * tau * g * dens)
    d = ph * (d - 1j * tau * g * (dens * d + a * a * d.conj()))
    return ph * a, d


def advance_tangent(state, tangent, prop: Propagator, n_steps: int):
    """Advance a state and its tangent together by ``n_steps`` Strang steps."""
    a = np.array(state, dtype=complex)
    d = np.array(tangent, dtype=complex)
    if n_steps <= 0:
        return a, d
    ut = prop.linear_step.T
    if prop.linear:
        for _ in range(n_steps):
            a = a @ ut
            d = d @ ut
        return a, d
    g, dt = prop.g_site, prop.dt
    a, d = _nl_pair(a, d, g, 0.5 * dt)
    for _ in range(n_steps - 1):
        a, d = _nl_pair(a @ ut, d @ ut, g, dt)
    a, d = a @ ut, d @ ut
    return _nl_pair(a, d, g, 0.5 * dt)


def _initial_tangents(states: np.ndarray, seed: int, offset: int = 0) -> np.ndarray:
    """Random complex Gaussian tangents with the global-phase direction ``i a`` projected out."""
    n, m = states.shape
    d = np.empty((n, m), dtype=complex)
    for j in range(n):
        rng = trajectory_rng(seed, TANGENT_STREAM, offset + j)
        z = rng.standard_normal((2, m))
        d[j] = z[0] + 1j * z[1]
    phase_dir = 1j * states
    norm2 = np.sum(np.abs(phase_dir) ** 2, axis=1, keepdims=True)
    overlap = np.sum((phase_dir.conj() * d).real, axis=1, keepdims=True)
    d = d - np.where(norm2 > 0, overlap / np.where(norm2 > 0, norm2, 1.0), 0.0) * phase_dir
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass
class LyapunovRun:
    """Per-trajectory exponents and their running estimates.

    ``running[i, j]`` is the estimate for trajectory ``j`` after ``times[i]``.
    """

    lambdas: np.ndarray
    times: np.ndarray
    running: np.ndarray
    final_states: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.lambdas.mean())

    @property
    def stderr(self) -> float:
        n = self.lambdas.size
        return float(self.lambdas.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")


class _BlockLyapunov:
    def __init__(self, states, prop, n_renorm, steps_per, seed):
        self.states = states
        self.prop = prop
        self.n_renorm = n_renorm
        self.steps_per = steps_per
        self.seed = seed

    def __call__(self, start, stop):
        a = self.states[start:stop]
        d = _initial_tangents(a, self.seed, start)
        logs = np.zeros((self.n_renorm, stop - start))
        for i in range(self.n_renorm):
            a, d = advance_tangent(a, d, self.prop, self.steps_per)
            norm = np.linalg.norm(d, axis=1)
            logs[i] = np.log(norm)
            d = d / norm[:, None]
        return logs, a


def ensemble_lyapunov(
    states: np.ndarray,
    prop: Propagator,
    T: float = 2000.0,
    tau_r: float = 1.0,
    seed: int = 0,
    workers: int = 1,
) -> LyapunovRun:
    """Benettin estimate of the maximal exponent for every trajectory in ``states``.

    The tangent is renormalized every ``tau_r`` time units; the exponent is
    the accumulated log growth divided by the total time.
    """
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    steps_per = max(1, int(round(tau_r / prop.dt)))
    n_renorm = max(1, int(round(T / (steps_per * prop.dt))))
    blocks = map_blocks(_BlockLyapunov(states, prop, n_renorm, steps_per, seed), states.shape[0], workers)
    logs = np.concatenate([b[0] for b in blocks], axis=1)
    final = np.concatenate([b[1] for b in blocks])
    times = np.arange(1, n_renorm + 1) * steps_per * prop.dt
    running = np.cumsum(logs, axis=0) / times[:, None]
    return LyapunovRun(running[-1].copy(), times, running, final)


def max_lyapunov(
    graph: SiteGraph,
    init: np.ndarray,
    T: float = 2000.0,
    tau_r: float = 1.0,
    seed: int = 0,
    dt: float = LYAPUNOV_DT,
):
    """Maximal exponent of one trajectory; returns ``(lambda, times, running_estimate)``."""
    run = ensemble_lyapunov(np.asarray(init)[None, :], Propagator.build(graph, dt), T, tau_r, seed)
    return float(run.lambdas[0]), run.times, run.running[:, 0]


def mi_increment(q, g: float, J: float = 1.0):
    """Growth rate ``|q| sqrt(2g/J - q^2)`` of the sidebands ``pi +- q``; zero for stable ``q``."""
    q = np.asarray(q, dtype=float)
    rad = 2 * g / J - q**2
    nu = np.abs(q) * np.sqrt(np.clip(rad, 0.0, None))
    return float(nu) if nu.ndim == 0 else nu


def sideband_growth_rate(q, g: float, J: float = 1.0):
    """Growth rate of sideband populations ``|b_{pi+-q}|^2`` for the ``-J/2`` lattice hopping used here.

    Linearizing around the ``kappa = pi`` plane wave of unit density gives an
    amplitude rate ``sqrt(u (2g - u))`` with ``u = J (1 - cos q)``; the
    population grows at twice that. The amplitude rate peaks at exactly ``g``.
    """
    u = J * (1 - np.cos(np.asarray(q, dtype=float)))
    rate = 2 * np.sqrt(np.clip(u * (2 * g - u), 0.0, None))
    return float(rate) if rate.ndim == 0 else rate


def plane_wave_state(kappa: float, m: int, t: float = 0.0, g: float = 0.0, J: float = 1.0) -> np.ndarray:
    """Exact unit-density plane wave ``exp(i kappa l + i (J cos kappa - g) t)`` on an ``m``-site ring."""
    k = kappa * m / (2 * np.pi)
    if abs(k - round(k)) > 1e-9:
        raise ValueError(f"kappa={kappa} is not a multiple of 2 pi / {m}")
    ell = np.arange(m)
    return np.exp(1j * kappa * ell + 1j * (J * math.cos(kappa) - g) * t)


def measure_sideband_growth(
    m: int,
    q_index: int,
    g: float,
    J: float = 1.0,
    amplitude: float = 1e-7,
    t_final: float = 200.0,
    dt: float = 0.01,
    sample_dt: float = 0.1,
) -> float:
    """Fitted growth rate of ``|b_{pi+q}|^2`` after seeding the ``kappa = pi`` plane wave.

    The fit uses the stretch where the sideband has grown by more than ``e^5``
    over its seed but is still far below the carrier.
    """
    if m % 2:
        raise ValueError("ring size must be even so that kappa = pi is a lattice mode")
    graph = ring(m, J, g)
    prop = Propagator.build(graph, dt)
    k0 = m // 2
    b = np.zeros(m, dtype=complex)
    b[k0] = math.sqrt(m)
    b[(k0 + q_index) % m] = amplitude
    b[(k0 - q_index) % m] = amplitude
    a = math.sqrt(m) * np.fft.ifft(b)
    every = int(round(sample_dt / dt))
    n_samples = int(round(t_final / sample_dt))
    times = np.arange(n_samples + 1) * every * dt
    pops = np.empty(n_samples + 1)
    pops[0] = amplitude**2
    for i in range(1, n_samples + 1):
        a = advance(a, prop, every)
        pops[i] = abs(bloch_amplitudes(a)[(k0 + q_index) % m]) ** 2
        if pops[i] > 1e-3 * m:
            times, pops = times[: i + 1], pops[: i + 1]
            break
    logp = np.log(pops)
    mask = (logp > math.log(amplitude**2) + 5) & (logp < math.log(m) - 12)
    if mask.sum() < 5:
        raise RuntimeError("sideband did not show a clean exponential stretch; mode may be stable")
    slope, _ = np.polyfit(times[mask], logp[mask], 1)
    return float(slope)


def lyapunov_sweep(
    kind: str,
    values: Sequence[float],
    beta: float = 2.0,
    g: float = 0.4,
    m: int = 20,
    n_bar: float = 1.0,
    n_samples: int = 100,
    T: float = 1000.0,
    tau_r: float = 1.0,
    dt: float = LYAPUNOV_DT,
    seed: int = 0,
    shifted: bool = False,
    J: float = 1.0,
    workers: int = 1,
    e_kin: float | None = None,
) -> list[dict]:
    """Mean maximal exponent over quantum-ensemble trajectories along a grid of ``beta``, ``g`` or ``M``.

    Each row records the grid value, the thermal kinetic energy per site
    ``E_K``, the sampled mean total energy per site, the mean exponent, its
    standard error and the number of samples. ``beta = 0`` means infinite
    temperature (flat occupations). Passing ``e_kin`` pins the kinetic
    energy per site instead of ``beta``: every grid point then gets the
    temperature that reproduces it, which is how ring sizes are compared.
    """
    if kind not in ("beta", "g", "M"):
        raise ValueError(f"sweep kind must be 'beta', 'g' or 'M', got {kind!r}")
    rows = []
    for idx, value in enumerate(values):
        b, gg, mm = beta, g, m
        if kind == "beta":
            b = float(value)
        elif kind == "g":
            gg = float(value)
        else:
            mm = int(value)
        if e_kin is not None and kind != "beta":
            point = solve_beta_mu(n_bar, e_kin, mm, J)
            b = point.beta
        else:
            point = _thermal_or_flat(b, n_bar, mm, J)
        ens = sample_quantum_ensemble(point, n_samples, seed, shifted=shifted, stream=idx)
        graph = ring(mm, J, gg)
        e_tot = classical_energy(graph, ens.states)[0] / mm
        run = ensemble_lyapunov(ens.states, Propagator.build(graph, dt), T, tau_r, seed + idx, workers)
        n_k = point.occupations
        if shifted:
            n_k = np.roll(n_k, mm // 2)
        rows.append(
            {
                "kind": kind,
                "value": float(value),
                "beta": b,
                "g": gg,
                "M": mm,
                "E_K": float(np.dot(mode_energies(mm, J), n_k) / mm),
                "E_total": float(e_tot.mean()),
                "lambda_mean": run.mean,
                "stderr": run.stderr,
                "n_samples": n_samples,
            }
        )
    return rows


class _FlatPoint(ThermalPoint):
    @property
    def occupations(self) -> np.ndarray:
        return np.full(self.m, self.n_bar)


def _thermal_or_flat(beta: float, n_bar: float, m: int, J: float) -> ThermalPoint:
    if beta == 0:
        return _FlatPoint(0.0, -math.inf, n_bar, 0.0, m, J)
    return ThermalPoint.from_beta_density(beta, n_bar, m, J)
