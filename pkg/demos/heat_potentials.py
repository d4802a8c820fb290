"""
Boundary heat potentials
========================

Surface constants, the two exponent conventions for the fundamental
solution, and a boundary-density solve on the unit circle.
"""

import numpy as np

from evodiff import kernel as kn

for n in (1, 2, 3):
    r = kn.h0_and_cn(n)
    print(f"n={n}: H(0)={r.H0:.12f}  closed form={r.H0_closed:.12f}  c_n={r.cn:.10f}")

ctx = kn.KernelContext(1, "interval")
pts = np.random.default_rng(0).uniform(-1, 1, (16, 1))
for mode in kn.MODES:
    chk = kn.verify_fundamental(ctx, pts, [0.5, 1.0], mode=mode)
    print(f"Z0 heat-equation residual, {mode:8s}: {chk.relative:.2e} (flagged={chk.flagged})")

# density for gamma = 1.5 + cos(theta) on the unit circle
circle = kn.KernelContext(2, nodes=24)
op = kn.discretize_J(circle, np.linspace(0, 0.5, 11))
K, M = op.shape
theta = 2 * np.pi * np.arange(M) / M
gamma = np.tile(1.5 + np.cos(theta), (K, 1))
sol = kn.solve_density(gamma, op)
print(f"\ndensity solve: max residual {np.abs(op.apply(sol.g) + 2 * gamma).max():.1e}, "
      f"cond {sol.condition:.2f}")
for x in (0.0, 0.25, 0.5):
    print(f"  phi(({x}, 0), 0.5) = {kn.classical_solution(sol.g, [x, 0.0], 0.5, op):.6f}")
