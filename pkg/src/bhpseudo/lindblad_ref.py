"""Boundary-driven non-interacting chain: exact Markovian reference results.

For a quadratic Hamiltonian ``sum h_ij a_i^+ a_j`` with loss/gain Lindblad
terms at the two chain ends, the covariance ``sigma_ij = <a_i^+ a_j>`` obeys
the closed linear equation

    d sigma / dt = i [h^T, sigma] - (P sigma + sigma P) / 2 + Q,

where ``P = diag(Gamma_i)`` on the boundary sites and ``Q = diag(Gamma_i n_i)``.
The steady state is found by vectorizing that equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DrivenChainSpec", "analytic_current", "chain_hamiltonian", "covariance_generator", "steady_covariance", "bond_currents"]


@dataclass(frozen=True)
class DrivenChainSpec:
    L: int
    J: float = 1.0
    Gamma_L: float = 0.07
    Gamma_R: float = 0.07
    n_L: float = 1.0
    n_R: float = 0.5

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"chain length must be at least 1, got {self.L}")
        if not (self.Gamma_L > 0 and self.Gamma_R > 0):
            raise ValueError("boundary rates must be positive")
        if self.n_L < 0 or self.n_R < 0:
            raise ValueError("reservoir densities must be non-negative")


def analytic_current(spec: DrivenChainSpec) -> float:
    """Closed-form stationary current for equal boundary rates."""
    if spec.Gamma_L != spec.Gamma_R:
        raise ValueError("the closed form only covers Gamma_L == Gamma_R")
    J, G = spec.J, spec.Gamma_L
    return J**2 * G / (J**2 + G**2) * (spec.n_L - spec.n_R) / 2


def chain_hamiltonian(L: int, J: float) -> np.ndarray:
    h = np.zeros((L, L))
    idx = np.arange(L - 1)
    h[idx, idx + 1] = h[idx + 1, idx] = -0.5 * J
    return h


def covariance_generator(spec: DrivenChainSpec):
    """Return ``(A, Q)`` with ``d sigma/dt = A sigma + sigma A^+ + Q``."""
    L = spec.L
    gam = np.zeros(L)
    pump = np.zeros(L)
    gam[0] += spec.Gamma_L
    gam[-1] += spec.Gamma_R
    pump[0] += spec.Gamma_L * spec.n_L
    pump[-1] += spec.Gamma_R * spec.n_R
    A = 1j * chain_hamiltonian(L, spec.J).T - 0.5 * np.diag(gam)
    return A, np.diag(pump).astype(complex)


def steady_covariance(spec: DrivenChainSpec):
    """Stationary covariance and the current it carries.

    For ``L >= 2`` the current is the bond current ``J Im sigma_{0,1}``
    (identical on every bond in the steady state). For ``L = 1`` there is
    no bond and the current is the net inflow from the left reservoir,
    ``Gamma_L (n_L - sigma_00)``.
    """
    A, Q = covariance_generator(spec)
    L = spec.L
    eye = np.eye(L)
    # row-major vec: vec(A S) = (A kron I) vec S, vec(S B) = (I kron B^T) vec S
    system = np.kron(A, eye) + np.kron(eye, A.conj())
    if abs(np.linalg.det(system)) < 1e-300:
        raise np.linalg.LinAlgError("steady-state system is singular")
    sigma = np.linalg.solve(system, -Q.reshape(-1)).reshape(L, L)
    sigma = 0.5 * (sigma + sigma.conj().T)
    if L >= 2:
        current = float(spec.J * sigma[0, 1].imag)
    else:
        current = float(spec.Gamma_L * (spec.n_L - sigma[0, 0].real))
    return sigma, current


def bond_currents(spec: DrivenChainSpec, sigma: np.ndarray) -> np.ndarray:
    """Current on every internal bond, ``J Im sigma_{l, l+1}``."""
    idx = np.arange(spec.L - 1)
    return spec.J * sigma[idx, idx + 1].imag
