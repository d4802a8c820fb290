"""
Heat equation on a fixed interval
=================================

With no growth and no reactions the solver is a plain Neumann heat solver,
so cos(pi x) should just decay like exp(-pi^2 t).
"""

import numpy as np

from evodiff import Grid, GrowthLaw, RunConfig, run, stable_dt
from evodiff.models import zero_model

law = GrowthLaw.static(1, 1.0)

# refine and watch the error drop by ~4x per halving of h
for nodes in (17, 33, 65, 129):
    grid = Grid.unit(1, nodes)
    dt = stable_dt(law, grid, (1.0,))
    traj = run(RunConfig(law, zero_model(1), grid, 0.1, lambda x: np.cos(np.pi * x)[None], dt=dt))
    x = grid.coords[0]
    exact = np.exp(-np.pi**2 * 0.1) * np.cos(np.pi * x)
    err = np.linalg.norm(traj.final.u[0] - exact) / np.linalg.norm(exact)
    print(f"N={nodes:4d}  dt={dt:.2e}  steps={traj.steps:6d}  rel L2 error={err:.3e}")
