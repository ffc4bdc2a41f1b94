"""Numerical checks of the weighted inequalities behind the energy estimates.

The Hardy battery compares quadrature values with closed forms. The Poincare
and equivalence batteries evaluate ratios over families of perturbed states;
they should stay bounded, and the equivalence constant should not depend on
the perturbation size.

Run with ``python demos/inequality_checks.py``.
"""

from fbcpe import Params, build_grid
from fbcpe.analysis import equivalence_battery, hardy_battery, poincare_battery

params = Params(gamma=2.0)
grid = build_grid(1, 64, None, 32, params.alpha)

for row in hardy_battery():
    print(f"hardy       {row.label:24s} lhs={row.lhs:.6g} rhs={row.rhs:.6g} {row.status}")

ratios = [row.ratio for row in poincare_battery(grid, params, beta=1.0, n=20)]
print(f"poincare    20 states, ratio in [{min(ratios):.4g}, {max(ratios):.4g}]")

for row in equivalence_battery(grid, params, eps_values=(1e-4, 1e-3), n=10):
    print(f"equivalence {row.label:24s} C={row.measured_C:.4f} {row.status}")
