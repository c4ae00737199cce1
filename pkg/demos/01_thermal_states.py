"""Thermal states of a ring and the quantum ensemble that represents them.

Run with ``python demos/01_thermal_states.py``.
"""

import numpy as np

from bhpseudo.lattice import ring
from bhpseudo.observables import spdm
from bhpseudo.thermal import ThermalPoint, sample_quantum_ensemble, solve_beta_mu, solve_mu

# A ring of M sites has Bloch modes with energies -J cos(2 pi k / M).
# Fixing the temperature and the density pins the chemical potential.
M = 20
for beta in (2.0, 0.2):
    mu = solve_mu(beta, 1.0, M)
    print(f"beta={beta:<4} n=1  ->  mu={mu:.6f}")

# The reverse question: which temperature gives a prescribed kinetic energy?
# This is how the common final state of two equilibrating rings is found.
cold = ThermalPoint.from_beta_density(2.0, 1.0, M)
hot = ThermalPoint.from_beta_density(0.2, 1.0, M)
target = solve_beta_mu(1.0, 0.5 * (cold.e_bar + hot.e_bar), M)
print(f"cold E={cold.e_bar:.4f}, hot E={hot.e_bar:.4f} -> common state beta={target.beta:.4f}, mu={target.mu:.4f}")

# The quantum ensemble: every trajectory has Bloch amplitudes sqrt(n_k) with
# independent random phases. Averages over the ensemble reproduce the thermal
# single-particle density matrix, which is diagonal in the Bloch basis.
ens = sample_quantum_ensemble(cold, n_traj=2048, seed=0)
rho = spdm(ens.states, ring(M), basis="bloch")
off = ~np.eye(M, dtype=bool)
print("Bloch diagonal equals n_k:", np.allclose(rho.diagonal, cold.occupations))
print(f"largest off-diagonal element: {np.abs(rho.matrix[off]).max():.3f} "
      f"({(np.abs(rho.matrix[off]) / rho.se[off]).max():.1f} standard errors)")

# Negative temperatures: shift the occupations by half the zone so the
# band-top mode is the most populated one.
flipped = sample_quantum_ensemble(cold, n_traj=4, seed=0, shifted=True)
b = np.fft.fft(flipped.states[0]) / np.sqrt(M)
print("most populated mode of the shifted ensemble:", int(np.argmax(np.abs(b))))
