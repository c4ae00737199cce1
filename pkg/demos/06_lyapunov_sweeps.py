"""Mean Lyapunov exponent against kinetic energy, interaction and ring size.

Uses 30 samples per point and T = 300 for speed; the built-in
``fig7_sweep`` scenario uses 100 samples and T = 1000.
"""

from bhpseudo.lyapunov import lyapunov_sweep

fast = dict(n_samples=30, T=300.0)

print("beta sweep at g=0.4, M=20 (beta=0 is infinite temperature)")
for row in lyapunov_sweep("beta", [0.0, 0.5, 1.0, 1.5, 2.0], g=0.4, m=20, **fast):
    print(f"  beta={row['beta']:.1f}  E_K={row['E_K']:+.3f}  lambda={row['lambda_mean']:.4f} +- {row['stderr']:.4f}")

print("same grid, shifted ensemble (negative temperatures, E_K > 0)")
for row in lyapunov_sweep("beta", [0.5, 1.0, 2.0], g=0.4, m=20, shifted=True, **fast):
    print(f"  beta={row['beta']:.1f}  E_K={row['E_K']:+.3f}  lambda={row['lambda_mean']:.4f} +- {row['stderr']:.4f}")

print("interaction sweep at beta=1")
for row in lyapunov_sweep("g", [0.2, 0.4, 0.8], beta=1.0, m=20, **fast):
    print(f"  g={row['g']:.1f}  lambda={row['lambda_mean']:.4f} +- {row['stderr']:.4f}")

print("ring size at fixed kinetic energy -0.5 per site")
for row in lyapunov_sweep("M", [10, 20, 40], g=0.4, e_kin=-0.5, **fast):
    print(f"  M={row['M']:<3d} beta={row['beta']:.3f}  lambda={row['lambda_mean']:.4f} +- {row['stderr']:.4f}")
