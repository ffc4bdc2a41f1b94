"""Density near the free surface after mapping back to physical space.

The solver works on a fixed domain. Mapping a state back to physical heights
recovers the density, which should vanish at the surface like
``depth^(1/(gamma-1))``. We check the fitted log-log slope for two
adiabatic exponents after a short evolution.

Run with ``python demos/physical_vacuum.py``.
"""

from fbcpe import Params, StepConfig, build_grid, perturbed_ic, step, to_physical
from fbcpe.physmap import surface_slope

for gamma in (2.0, 3.0):
    params = Params(gamma=gamma)
    grid = build_grid(1, 64, None, 32, params.alpha)
    state = perturbed_ic(grid, params, 1e-3, seed=1)
    config = StepConfig(1e-3)
    for _ in range(500):
        state = step(state, config)
    snap = to_physical(state)
    slope = surface_slope(snap, params)
    print(f"gamma={gamma:g}: slope {slope:.4f}, expected {1 / (gamma - 1):.4f}, "
          f"surface height in [{snap.surface.min():.5f}, {snap.surface.max():.5f}]")
