"""Ensemble-averaged measurements.

Every average over trajectories comes with a standard error so that tests
and scenario reports can use principled Monte-Carlo tolerances. Arrays of
states always have shape ``(n_traj, n_sites)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import Bond, Region, SiteGraph, classical_energy
from .thermal import ThermalPoint, be_occupation, mode_energies, solve_beta_mu

__all__ = [
    "Spdm",
    "mean_and_se",
    "bloch_amplitudes",
    "spdm",
    "to_bloch",
    "populations_and_counts",
    "bond_current",
    "bond_current_samples",
    "TransportMeasure",
    "TransportRecord",
    "TransportFit",
    "GammaFit",
    "default_window",
    "transport_fit",
    "gamma_from_kappa",
    "extract_gamma",
    "BERefit",
    "be_deviation",
    "be_refit",
    "trajectory_energies",
    "energy_histogram",
]


def mean_and_se(x: np.ndarray, axis: int = 0):
    """Mean and its standard error along ``axis``; complex input gives the error of the complex mean."""
    x = np.asarray(x)
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    if n < 2:
        return mean, np.full(np.shape(mean), np.inf)
    dev = x - np.expand_dims(mean, axis)
    var = (dev.real**2 + dev.imag**2).sum(axis=axis) / (n - 1)
    return mean, np.sqrt(var / n)


@dataclass
class Spdm:
    """Single-particle density matrix of one region, ``matrix[l, l'] = <a_l^* a_l'>``."""

    matrix: np.ndarray
    se: np.ndarray | None
    basis: str
    region: Region
    ring: bool
    n_traj: int
    time: float | None = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()


def _fourier_matrix(m: int) -> np.ndarray:
    k = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(k, k) / m) / math.sqrt(m)


def bloch_amplitudes(a: np.ndarray) -> np.ndarray:
    """``b_k = M^{-1/2} sum_l exp(-2 pi i k l / M) a_l`` along the last axis (inverse of the sampler's map)."""
    m = a.shape[-1]
    return np.fft.fft(a, axis=-1) / math.sqrt(m)


def _region_states(states, graph: SiteGraph, region) -> tuple[np.ndarray, Region]:
    region = Region(region)
    if not graph.has_region(region):
        raise KeyError(f"layout has no region {region.value!r}")
    sites = graph.sites(region)
    if len(sites) == 0:
        raise ValueError(f"region {region.value!r} is empty")
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[None, :]
    return states[:, sites], region


def spdm(states, graph: SiteGraph, region=Region.WHOLE, basis: str = "wannier", time: float | None = None) -> Spdm:
    """Ensemble SPDM of ``region`` in the Wannier (site) or Bloch (mode) basis."""
    a, region = _region_states(states, graph, region)
    ring = graph.is_ring(region)
    if basis == "bloch":
        if not ring:
            raise ValueError(f"Bloch basis needs a ring region, {region.value!r} is not one")
        a = bloch_amplitudes(a)
    elif basis != "wannier":
        raise ValueError(f"basis must be 'wannier' or 'bloch', got {basis!r}")
    n = a.shape[0]
    rho = a.conj().T @ a / n
    rho = 0.5 * (rho + rho.conj().T)
    if n > 1:
        p = a.real**2 + a.imag**2
        second = p.T @ p / n
        var = np.maximum(second - np.abs(rho) ** 2, 0.0) * n / (n - 1)
        se = np.sqrt(var / n)
    else:
        se = np.full(rho.shape, np.inf)
    return Spdm(rho, se, basis, region, ring, n, time)


def to_bloch(rho: Spdm) -> Spdm:
    """Conjugate a ring SPDM by the unitary Fourier matrix; standard errors are not carried over."""
    if rho.basis == "bloch":
        return rho
    if not rho.ring:
        raise ValueError(f"region {rho.region.value!r} is not a ring; no Bloch basis")
    f = _fourier_matrix(rho.matrix.shape[0])
    mat = f.conj() @ rho.matrix @ f.T
    return Spdm(mat, None, "bloch", rho.region, True, rho.n_traj, rho.time)


def populations_and_counts(states, graph: SiteGraph):
    """Mean site populations and mean particle number per region (``Region.WHOLE`` included)."""
    a = np.asarray(states)
    if a.ndim == 1:
        a = a[None, :]
    pop = (a.real**2 + a.imag**2).mean(axis=0)
    counts = {region: float(pop[sites].sum()) for region, sites in graph.regions.items()}
    counts[Region.WHOLE] = float(pop.sum())
    return pop, counts


def bond_current_samples(states, bond: Bond) -> np.ndarray:
    """Per-trajectory particle current from ``bond.i`` to ``bond.j``, ``hop * Im(a_i^* a_j)``."""
    a = np.asarray(states)
    if a.ndim == 1:
        a = a[None, :]
    return bond.hop * (a[:, bond.i].conj() * a[:, bond.j]).imag


def bond_current(states, bond: Bond | tuple, graph: SiteGraph | None = None) -> float:
    """Ensemble-averaged bond current.

    With ``graph`` given, ``bond`` may be an ``(i, j)`` pair and is looked up
    (an unknown bond raises ``KeyError``).
    """
    if graph is not None:
        i, j = (bond.i, bond.j) if isinstance(bond, Bond) else bond[:2]
        bond = graph.bond(i, j)
    return float(bond_current_samples(states, bond).mean())


class TransportMeasure:
    """Picklable per-block reduction used while evolving transport ensembles."""

    def __init__(self, graph: SiteGraph):
        self.left = graph.sites(Region.LEFT_RING)
        self.right = graph.sites(Region.RIGHT_RING)
        self.chain = graph.sites(Region.CHAIN) if Region.CHAIN in graph.regions else np.zeros(0, int)
        self.path = graph.chain_path()

    def __call__(self, a: np.ndarray) -> dict:
        p = a.real**2 + a.imag**2
        return {
            "N_L": p[:, self.left].sum(axis=1),
            "N_R": p[:, self.right].sum(axis=1),
            "N_chain": p[:, self.chain].sum(axis=1),
            "current": np.stack([bond_current_samples(a, b) for b in self.path], axis=1),
        }


@dataclass
class TransportRecord:
    """Time series of a two-ring transport run (ensemble means and standard errors)."""

    times: np.ndarray
    n_left: np.ndarray
    n_right: np.ndarray
    n_chain: np.ndarray
    currents: np.ndarray
    currents_se: np.ndarray
    m: int
    eps: float
    J: float = 1.0
    delta_n_se: np.ndarray | None = None

    @classmethod
    def from_snapshots(cls, snaps, graph: SiteGraph) -> "TransportRecord":
        d = snaps.data
        if not d:
            d = {k: [] for k in ("N_L", "N_R", "N_chain", "current")}
            measure = TransportMeasure(graph)
            for states in snaps.states:
                for k, v in measure(states).items():
                    d[k].append(v)
            d = {k: np.stack(v) for k, v in d.items()}
        cur, cur_se = mean_and_se(d["current"], axis=1)
        _, dn_se = mean_and_se(d["N_L"] - d["N_R"], axis=1)
        lay = graph.layout
        return cls(
            times=np.asarray(snaps.times, float),
            n_left=d["N_L"].mean(axis=1),
            n_right=d["N_R"].mean(axis=1),
            n_chain=d["N_chain"].mean(axis=1),
            currents=cur,
            currents_se=cur_se,
            m=int(lay["M"]),
            eps=float(lay["eps"]),
            J=float(lay.get("J", 1.0)),
            delta_n_se=dn_se,
        )

    @property
    def delta_n(self) -> np.ndarray:
        return self.n_left - self.n_right

    @property
    def z(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return (2.0 / self.m) * np.log(self.delta_n / self.delta_n[0])

    @property
    def density_left(self) -> np.ndarray:
        return self.n_left / self.m

    @property
    def density_right(self) -> np.ndarray:
        return self.n_right / self.m

    @property
    def total(self) -> np.ndarray:
        return self.n_left + self.n_right + self.n_chain

    @property
    def central_current(self) -> np.ndarray:
        """Current through the middle of the chain (mean of the two central bonds for an even path)."""
        nb = self.currents.shape[1]
        if nb % 2:
            return self.currents[:, nb // 2]
        return 0.5 * (self.currents[:, nb // 2 - 1] + self.currents[:, nb // 2])

    @property
    def junction_current(self) -> np.ndarray:
        """Mean of the two ring-chain junction currents.

        By particle conservation this equals ``-(d/dt)(N_L - N_R) / 2``. The
        junction bonds are weak, so the per-trajectory fluctuations are much
        smaller than on the strong internal chain bonds.
        """
        return 0.5 * (self.currents[:, 0] + self.currents[:, -1])


class TransportFit(NamedTuple):
    s: float
    z_slope: float
    r2: float
    intercept: float


class GammaFit(NamedTuple):
    kappa: float
    Gamma: float
    gamma_rate: float
    epsilon: float
    kappa_se: float


def default_window(record: TransportRecord, fraction: float = 0.9) -> tuple[float, float]:
    """Fit window starting when the chain population first reaches ``fraction`` of its plateau.

    The plateau is the mean chain population over the second half of the run.
    """
    t = record.times
    plateau = record.n_chain[t >= 0.5 * t[-1]].mean()
    idx = np.flatnonzero(record.n_chain >= fraction * plateau)
    start = t[idx[0]] if idx.size else t[0]
    return float(start), float(t[-1])


def _window_mask(times, window):
    lo, hi = window
    mask = (times >= lo) & (times <= hi)
    if mask.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two samples")
    return mask


def transport_fit(record: TransportRecord, window: tuple[float, float] | None = None) -> TransportFit:
    """Least-squares slope of ``ln(dN(t)/dN(0))`` over the window.

    ``s`` is the decay rate (``dN ~ exp(-s t)``) and ``z_slope = -2 s / M`` is
    the slope of ``z(t)``.
    """
    window = default_window(record) if window is None else window
    mask = _window_mask(record.times, window)
    dn = record.delta_n
    if dn[0] <= 0 or np.any(dn[mask] <= 0):
        raise ValueError("population difference changes sign inside the window; equilibration is over, shrink it")
    t = record.times[mask]
    y = np.log(dn[mask] / dn[0])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    s = -float(slope)
    return TransportFit(s + 0.0, -2.0 * s / record.m + 0.0, float(r2), float(intercept))


def gamma_from_kappa(kappa: float, J: float = 1.0) -> float:
    """Smaller root of ``kappa (J^2 + Gamma^2) = J^2 Gamma``."""
    if kappa < 0:
        raise ValueError(f"transport coefficient must be non-negative, got {kappa}")
    disc = J**4 - 4 * kappa**2 * J**2
    if disc < 0:
        raise ValueError(f"kappa={kappa} exceeds J/2={J / 2}; no relaxation rate reproduces it")
    return 2 * kappa * J**2 / (J**2 + math.sqrt(disc))


def extract_gamma(
    record: TransportRecord,
    J: float | None = None,
    window: tuple[float, float] | None = None,
    estimator: str = "central",
) -> GammaFit:
    """Boundary relaxation rate implied by the measured quasi-stationary current.

    ``estimator`` picks the current: ``"central"`` uses the bond(s) in the
    middle of the chain, ``"junction"`` the mean of the two junction bonds.
    Both measure the same steady current; the junction one is far less noisy.
    """
    if estimator not in ("central", "junction"):
        raise ValueError(f"estimator must be 'central' or 'junction', got {estimator!r}")
    J = record.J if J is None else J
    window = default_window(record) if window is None else window
    mask = _window_mask(record.times, window)
    dn = record.density_left[mask] - record.density_right[mask]
    if np.any(dn <= 0):
        raise ValueError("density difference must stay positive inside the window")
    current = record.central_current if estimator == "central" else record.junction_current
    kappa_t = 2.0 * current[mask] / dn
    kappa = float(kappa_t.mean())
    kappa_se = float(kappa_t.std(ddof=1) / math.sqrt(kappa_t.size)) if kappa_t.size > 1 else float("inf")
    Gamma = gamma_from_kappa(kappa, J)
    return GammaFit(kappa, Gamma, record.eps**2 / Gamma, record.eps, kappa_se)


class BERefit(NamedTuple):
    beta: float
    mu: float
    max_dev: float
    n_bar: float
    e_kin: float
    point: ThermalPoint


def be_deviation(diag: np.ndarray, beta: float, mu: float, J: float = 1.0) -> float:
    """Largest absolute difference between Bloch populations and a Bose-Einstein curve."""
    n_k = be_occupation(mode_energies(len(diag), J), beta, mu)
    return float(np.max(np.abs(np.asarray(diag) - n_k)))


def be_refit(states, graph: SiteGraph, region=Region.WHOLE, J: float = 1.0) -> BERefit:
    """Bose-Einstein state with the same density and kinetic energy as the region's Bloch populations."""
    rho = spdm(states, graph, region, basis="bloch")
    diag = rho.diagonal
    m = diag.size
    n_bar = float(diag.sum() / m)
    e_kin = float(np.dot(mode_energies(m, J), diag) / m)
    point = solve_beta_mu(n_bar, e_kin, m, J)
    return BERefit(point.beta, point.mu, be_deviation(diag, point.beta, point.mu, J), n_bar, e_kin, point)


def trajectory_energies(states, graph: SiteGraph) -> dict:
    """Per-trajectory energies per site: ``{"total", "kinetic", "potential"}``."""
    e, ek, ep = classical_energy(graph, np.asarray(states))
    n = graph.n_sites
    return {"total": e / n, "kinetic": ek / n, "potential": ep / n}


def energy_histogram(states, graph: SiteGraph, component: str = "total", bins=50, range=None):
    """Histogram of per-trajectory energy per site; returns ``(counts, edges)``."""
    energies = trajectory_energies(states, graph)
    if component not in energies:
        raise ValueError(f"component must be one of {sorted(energies)}, got {component!r}")
    return np.histogram(energies[component], bins=bins, range=range)
