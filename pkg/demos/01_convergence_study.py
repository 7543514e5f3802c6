"""Manufactured-solution convergence study with Navier slip on one side.

The exact flow on (-1, 1)^2 is

    u = (2 x2 (1 - x1^2), -2 x1 (1 - x2^2)),   p = (2 x1 - 1)(2 x2 - 1),

with slip imposed weakly (Nitsche) on x2 = -1 and Dirichlet data elsewhere.
Run with ``python demos/01_convergence_study.py [max_level]``.
"""
import sys

import numpy as np

from nsns.forms import PhysicalParams
from nsns.io import RateTable
from nsns.steady import run_manufactured_convergence

max_level = int(sys.argv[1]) if len(sys.argv) > 1 else 32
levels = [n for n in (8, 16, 32, 64, 128) if n <= max_level]

# %% Taylor-Hood errors and observed rates for the default penalty
params = PhysicalParams(nu=1.0, beta=10.0, gamma=10.0)
results = run_manufactured_convergence(levels, params)
print(f"{'n':>4} {'dofs':>7} {'p L2':>9} {'rate':>5} {'u H1':>9} {'rate':>5} {'u L2':>9} {'rate':>5}")
for r in RateTable.from_levels(results).rows:
    rates = r.rates or (np.nan,) * 3
    print(f"{r.n:4d} {r.dofs:7d} {r.pressure_l2:9.2e} {rates[0]:5.2f} {r.velocity_h1:9.2e} "
          f"{rates[1]:5.2f} {r.velocity_l2:9.2e} {rates[2]:5.2f}")

# Expected: second order for pressure-L2 and velocity-H1, third for velocity-L2.

# %% Newton from a zero guess needs only a few steps at nu = 1
for lv in results:
    res = ", ".join(f"{r:.1e}" for r in lv.residual_norms)
    print(f"n={lv.n:4d}  iterations={lv.newton_iterations}  residuals: {res}")

# %% How the Nitsche penalty controls the slip condition
print("\n   n " + "".join(f"  gamma={g:<7g}" for g in (0.1, 1, 10, 100)))
slips = {}
for g in (0.1, 1.0, 10.0, 100.0):
    lv = run_manufactured_convergence(levels, PhysicalParams(1.0, 10.0, g))
    slips[g] = [x.errors.slip for x in lv]
for i, n in enumerate(levels):
    print(f"{n:4d} " + "".join(f"  {slips[g][i]:<13.2e}" for g in slips))

ratio = np.array(slips[1.0]) / np.array(slips[100.0])
print(f"\nslip(gamma=1) / slip(gamma=100) on the finest level: {ratio[-1]:.0f}")
