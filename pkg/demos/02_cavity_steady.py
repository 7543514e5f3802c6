"""Steady lid-driven cavity with slip walls.

The lid x2 = 1 carries a regularized unit speed. The other three walls use
Navier slip with friction ``beta = 1``. Newton converges from rest at
moderate Reynolds numbers; at Re >= 1000 it stalls on a 32 x 32 mesh, which
is what the unsteady VMS-LES demo is for.
"""
import numpy as np

from nsns.benchmarks import cavity_mesh, cavity_params, lid_velocity
from nsns.forms import slip_norm
from nsns.spaces import build_taylor_hood
from nsns.steady import solve_navier_stokes

space = build_taylor_hood(cavity_mesh(32))
print(f"{space.n_total} unknowns")

# %% Newton at three Reynolds numbers
for re in (1.0, 100.0, 500.0):
    state, report = solve_navier_stokes(space, cavity_params(re), dirichlet_data=lid_velocity)
    u = state.velocity.reshape(-1, 2)
    print(f"Re={re:<5g} converged={report.converged} iterations={report.iterations:2d} "
          f"max|u|={np.abs(u).max():.3f} slip={slip_norm(space, state.velocity):.2e}")

# %% Where is the primary vortex?  The slowest node in the core region,
# away from the corner eddies, is a cheap proxy for its centre.
xy = space.node_coords
inside = np.all((xy > 0.25) & (xy < 0.9), axis=1)
speed = np.linalg.norm(u, axis=1)
k = np.flatnonzero(inside)[np.argmin(speed[inside])]
print(f"vortex centre near ({xy[k, 0]:.2f}, {xy[k, 1]:.2f}) at Re=500")
