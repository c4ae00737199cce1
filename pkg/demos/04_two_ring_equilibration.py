"""Two rings at different temperatures exchange energy through one weak bond.

The built-in ``fig3_equilibrate`` scenario runs the same setup with 2048
trajectories up to t = 3200.
"""

import numpy as np

from bhpseudo.dynamics import Propagator, evolve_ensemble
from bhpseudo.lattice import Region, two_rings_point
from bhpseudo.scenario import BlochMeasure
from bhpseudo.thermal import ThermalPoint, embed_ensembles, sample_quantum_ensemble, solve_beta_mu

M = 20
graph = two_rings_point(M, eps=0.25, g=0.4)
cold = ThermalPoint.from_beta_density(2.0, 1.0, M)
hot = ThermalPoint.from_beta_density(0.2, 1.0, M)

# Each ring gets its own sampling stream so that the phases are independent.
ens = embed_ensembles(
    graph,
    {
        Region.LEFT_RING: sample_quantum_ensemble(cold, 256, 0, stream=0),
        Region.RIGHT_RING: sample_quantum_ensemble(hot, 256, 0, stream=1),
    },
    n_traj=256,
    seed=0,
)

# A summing measure keeps only ensemble sums, not every state at every time.
measure = BlochMeasure(graph)
times = np.arange(0, 2001, 250.0)
snaps = evolve_ensemble(ens, Propagator.build(graph, 0.05), times, measure)

target = solve_beta_mu(1.0, 0.5 * (cold.e_bar + hot.e_bar), M)
E = -np.cos(2 * np.pi * np.arange(M) / M)
print("   t    E_K left   E_K right")
for i, t in enumerate(snaps.times):
    left = snaps.data["bloch_left_ring"][i] / snaps.n_traj
    right = snaps.data["bloch_right_ring"][i] / snaps.n_traj
    print(f"{t:6.0f}  {E @ left / M:9.4f}  {E @ right / M:9.4f}")
print(f"common Bose-Einstein state: E_K={target.e_bar:.4f}, beta={target.beta:.3f}")
