"""Bose-Einstein statistics on an M-site ring and quantum-ensemble sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

from .lattice import Region, SiteGraph

__all__ = [
    "DEFAULT_N_TRAJ",
    "ThermalPoint",
    "Ensemble",
    "dispersion",
    "mode_energies",
    "be_occupation",
    "be_moments",
    "solve_mu",
    "solve_beta_mu",
    "trajectory_rng",
    "sample_quantum_ensemble",
    "embed_ensembles",
]

DEFAULT_N_TRAJ = 2048

_MU_TOL = 1e-10
_PAIR_TOL = 1e-8


def dispersion(k: int, m: int, J: float = 1.0) -> float:
    """Single-particle energy ``-J cos(2 pi k / M)`` of Bloch mode ``k``."""
    if not 0 <= k < m:
        raise ValueError(f"mode index must satisfy 0 <= k < {m}, got {k}")
    return -J * math.cos(2 * math.pi * k / m)


def mode_energies(m: int, J: float = 1.0) -> np.ndarray:
    return -J * np.cos(2 * np.pi * np.arange(m) / m)


def be_occupation(E, beta: float, mu: float):
    """Bose-Einstein occupation ``1 / (exp(beta (E - mu)) - 1)``.

    Raises ``ValueError`` for ``beta <= 0`` or when any ``E <= mu``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    E = np.asarray(E, dtype=float)
    if np.any(E <= mu):
        raise ValueError(f"chemical potential mu={mu} must lie below every mode energy (min {E.min()})")
    with np.errstate(over="ignore"):
        n = 1.0 / np.expm1(beta * (E - mu))
    return float(n) if n.ndim == 0 else n


def be_moments(beta: float, mu: float, m: int, J: float = 1.0) -> tuple[float, float]:
    """Mean density and mean kinetic energy per site, ``(n_bar, e_bar)``."""
    E = mode_energies(m, J)
    n = be_occupation(E, beta, mu)
    return float(np.mean(n)), float(np.mean(E * n))


def _mu_of(x: float, J: float) -> float:
    # mu = -J - e^x keeps mu strictly below the band bottom
    return -J - math.exp(x)


def solve_mu(beta: float, n_target: float, m: int, J: float = 1.0) -> float:
    """Chemical potential giving mean density ``n_target`` at inverse temperature ``beta``."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not n_target > 0:
        raise ValueError(f"target density must be positive, got {n_target}")

    def resid(x):
        return be_moments(beta, _mu_of(x, J), m, J)[0] - n_target

    # e^-33 is still resolvable next to J ~ 1
    lo, hi = -33.0 + math.log(abs(J)), 5.0
    if resid(lo) < 0:
        raise ValueError(f"density {n_target} needs mu closer to the band bottom than double precision allows")
    while resid(hi) > 0:
        hi += 5.0
        if hi > 700:
            raise RuntimeError("could not bracket mu from below")
    x = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    mu = _mu_of(x, J)
    if abs(be_moments(beta, mu, m, J)[0] - n_target) >= _MU_TOL * max(1.0, n_target):
        raise RuntimeError(f"mu solver did not reach tolerance for beta={beta}, n={n_target}")
    return mu


@dataclass(frozen=True)
class ThermalPoint:
    """A Bose-Einstein state of an M-site ring, in units where ``J`` sets the energy scale."""

    beta: float
    mu: float
    n_bar: float
    e_bar: float
    m: int
    J: float = 1.0

    @classmethod
    def from_beta_mu(cls, beta: float, mu: float, m: int, J: float = 1.0) -> "ThermalPoint":
        n, e = be_moments(beta, mu, m, J)
        return cls(beta, mu, n, e, m, J)

    @classmethod
    def from_beta_density(cls, beta: float, n_bar: float, m: int, J: float = 1.0) -> "ThermalPoint":
        return cls.from_beta_mu(beta, solve_mu(beta, n_bar, m, J), m, J)

    @classmethod
    def from_density_energy(cls, n_bar: float, e_bar: float, m: int, J: float = 1.0) -> "ThermalPoint":
        return solve_beta_mu(n_bar, e_bar, m, J)

    @property
    def occupations(self) -> np.ndarray:
        return be_occupation(mode_energies(self.m, self.J), self.beta, self.mu)

    def as_dict(self) -> dict:
        return {"beta": self.beta, "mu": self.mu, "n_bar": self.n_bar, "e_bar": self.e_bar, "M": self.m, "J": self.J}


def solve_beta_mu(n_target: float, e_target: float, m: int, J: float = 1.0) -> ThermalPoint:
    """Invert ``be_moments``: find the positive-temperature state with given density and energy.

    The attainable kinetic energy per site at density ``n`` is the open
    interval ``(-J n, 0)``; anything else is rejected.
    """
    if not n_target > 0:
        raise ValueError(f"target density must be positive, got {n_target}")
    lo_e, hi_e = -J * n_target, 0.0
    if not lo_e < e_target < hi_e:
        raise ValueError(
            f"mean energy {e_target} is outside the attainable interval ({lo_e}, {hi_e}) for density {n_target}"
        )

    def energy(logb):
        beta = math.exp(logb)
        return be_moments(beta, solve_mu(beta, n_target, m, J), m, J)[1]

    # energy increases as beta decreases
    lo, hi = math.log(1e-4), math.log(1e3)
    while energy(lo) < e_target:
        lo -= 3.0
        if lo < math.log(1e-300):
            raise ValueError(f"mean energy {e_target} too close to the infinite-temperature limit")
    while energy(hi) > e_target:
        hi += 3.0
        if hi > math.log(1e300):
            raise ValueError(f"mean energy {e_target} too close to the ground-state limit")
    logb = brentq(lambda x: energy(x) - e_target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    point = ThermalPoint.from_beta_density(math.exp(logb), n_target, m, J)
    if abs(point.n_bar - n_target) > _PAIR_TOL or abs(point.e_bar - e_target) > _PAIR_TOL:
        raise RuntimeError(f"(beta, mu) solver missed the targets: got n={point.n_bar}, e={point.e_bar}")
    return point


@dataclass
class Ensemble:
    """Stack of classical field states, shape ``(n_traj, n_sites)``."""

    states: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def n_sites(self) -> int:
        return self.states.shape[1]


def trajectory_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based generator owned by one trajectory of one sampling stream.

    The stream depends only on ``(seed, stream, index)``, so results do not
    depend on execution order or on how trajectories are split across workers.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(stream, index))
    return np.random.Generator(np.random.Philox(ss))


def sample_quantum_ensemble(
    point: ThermalPoint,
    n_traj: int = DEFAULT_N_TRAJ,
    seed: int = 0,
    shifted: bool = False,
    stream: int = 0,
) -> Ensemble:
    """Random-phase ensemble whose SPDM is the thermal one.

    Every trajectory has Bloch amplitudes ``sqrt(n_k) exp(i phi_k)`` with
    independent uniform phases and site amplitudes
    ``a_l = M^{-1/2} sum_k exp(2 pi i k l / M) b_k``. With ``shifted`` the
    occupations are moved by half the Brillouin zone, which is how negative
    temperatures are represented.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be at least 1, got {n_traj}")
    m = point.m
    n_k = point.occupations
    if shifted:
        n_k = np.roll(n_k, m // 2)
    modulus = np.sqrt(n_k)
    phases = np.empty((n_traj, m))
    for j in range(n_traj):
        phases[j] = trajectory_rng(seed, stream, j).uniform(0.0, 2 * np.pi, size=m)
    b = modulus * np.exp(1j * phases)
    states = np.sqrt(m) * np.fft.ifft(b, axis=1)
    meta = {"points": {"whole": point.as_dict()}, "shifted": {"whole": bool(shifted)}, "stream": stream}
    return Ensemble(states=states, seed=seed, meta=meta)


def embed_ensembles(graph: SiteGraph, parts: Mapping[Region | str, Ensemble | None], n_traj: int, seed: int) -> Ensemble:
    """Place per-region ensembles into a full-graph ensemble; regions mapped to ``None`` start empty."""
    states = np.zeros((n_traj, graph.n_sites), dtype=complex)
    meta: dict = {"points": {}, "shifted": {}}
    for region, ens in parts.items():
        region = Region(region)
        sites = graph.sites(region)
        if ens is None:
            meta["points"][region.value] = None
            continue
        if ens.n_traj != n_traj or ens.n_sites != len(sites):
            raise ValueError(
                f"ensemble for {region.value} has shape {ens.states.shape}, expected ({n_traj}, {len(sites)})"
            )
        states[:, sites] = ens.states
        meta["points"][region.value] = ens.meta["points"]["whole"]
        meta["shifted"][region.value] = ens.meta["shifted"]["whole"]
    return Ensemble(states=states, seed=seed, meta=meta)
