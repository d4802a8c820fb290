"""
Lyapunov polynomials and the duality estimate
=============================================
"""

import numpy as np

from evodiff import diagnostics as dg
from evodiff import Grid, GrowthLaw
from evodiff.models import reversible_reaction

print("P(1, 1; p=2, Theta=2) =", dg.lyapunov_P(1.0, 1.0, 2, 2.0))
print("P_m(1, 1, 1; p=2, theta=(2, 2)) =", dg.lyapunov_P_m([1, 1, 1], 2, [2, 2]))

# B(Theta) turns positive definite once Theta passes the threshold
D, Dt = 4.0, 1.0
thr = dg.theta_threshold(D, Dt)
print(f"\nthreshold for D={D}, D~={Dt}: {thr}")
for theta in (1.0, 1.1, thr, 1.3, 2.0):
    b = dg.b_matrix_posdef(theta, D, Dt)
    print(f"  Theta={theta:5.3f}  det B={b.det:9.4f}  positive definite={b.is_positive_definite}")

# Both sides of the duality inequality for the reversible reaction
grid = Grid.unit(2, 17)


def u0(x, y):
    return np.stack([1 + 0.5 * np.cos(np.pi * x), 1.5 - 0.4 * np.cos(np.pi * y), 0.5 + 0.2 * x * y])


model = reversible_reaction(d=(1.0, 0.5, 2.0))
for name, law in (("static", GrowthLaw.static(2, 1.0)), ("growing", GrowthLaw.exponential(0.5, 2, 1.0))):
    for dilution in ("printed", "weighted"):
        res = dg.duality_experiment(model, law, grid, 0.2, u0, dilution=dilution).result
        print(f"\n{name:8s} {dilution:8s} LHS={res.lhs:.8f}  RHS={res.rhs:.8f}  LHS-RHS={res.residual:+.2e}")
        for term, value in res.terms.items():
            print(f"    {term:16s} {value:+.6e}")
