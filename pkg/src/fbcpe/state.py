"""Model state, equilibrium and perturbed initial data."""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .grid import Grid, Params, mean_h, vertical_avg_weighted, zcol

#: Monitored band for the surface field; outside it the run is stopped.
Z_BAND = (0.5, 2.0)


class ValidityBandError(RuntimeError):
    """Raised when ``Z`` leaves the monitored band ``(1/2, 2)``."""

    def __init__(self, t, zmin, zmax):
        super().__init__(f"Z left the validity band at t={t:.6g}: min={zmin:.6g}, max={zmax:.6g}")
        self.t = t
        self.zmin = zmin
        self.zmax = zmax


@dataclasses.dataclass(frozen=True, eq=False)
class State:
    """Immutable snapshot ``(t, Z, v)``.

    ``Z`` has shape ``(nx, ny)``; ``v`` has shape ``(dim_h, nz, nx, ny)``.
    ``Z_lo`` optionally holds the rounding error of ``Z`` carried by the
    compensated time accumulation, so the surface field is ``Z + Z_lo`` to
    about twice double precision. It is dropped whenever ``Z`` is replaced
    without a matching ``Z_lo``.
    """

    t: float
    Z: np.ndarray
    v: np.ndarray
    params: Params
    grid: Grid
    Z_lo: np.ndarray | None = None

    def __post_init__(self):
        g = self.grid
        if self.Z.shape != g.hshape:
            raise ValueError(f"Z has shape {self.Z.shape}, expected {g.hshape}")
        if self.v.shape != (g.dim_h,) + g.vshape:
            raise ValueError(f"v has shape {self.v.shape}, expected {(g.dim_h,) + g.vshape}")
        if abs(self.params.alpha - g.alpha) > 1e-14 * max(1.0, g.alpha):
            raise ValueError("grid was built for a different alpha than params")
        if self.Z_lo is not None and self.Z_lo.shape != g.hshape:
            raise ValueError(f"Z_lo has shape {self.Z_lo.shape}, expected {g.hshape}")
        for a in (self.Z, self.v, self.Z_lo):
            if a is not None:
                a.setflags(write=False)

    def replace(self, **changes) -> "State":
        if "Z" in changes and "Z_lo" not in changes:
            changes["Z_lo"] = None
        changes = {k: (np.array(v, dtype=float) if k in ("Z", "v", "Z_lo") and v is not None
                       else v)
                   for k, v in changes.items()}
        return dataclasses.replace(self, **changes)

    @property
    def zeta(self) -> np.ndarray:
        """``Z - 1`` including the low-order part (``Z - 1`` itself is exact)."""
        zeta = self.Z - 1.0
        return zeta if self.Z_lo is None else zeta + self.Z_lo

    def in_band(self) -> bool:
        return bool(Z_BAND[0] < self.Z.min() and self.Z.max() < Z_BAND[1])

    def check_band(self):
        if not self.in_band():
            raise ValidityBandError(self.t, float(self.Z.min()), float(self.Z.max()))


def equilibrium_state(grid: Grid, params: Params) -> State:
    return State(0.0, np.ones(grid.hshape), np.zeros((grid.dim_h,) + grid.vshape),
                 params, grid)


@dataclasses.dataclass(frozen=True)
class SurfaceMode:
    """``amp * cos(2 pi (kx x + ky y) + phase)``."""

    kx: int
    ky: int = 0
    amp: float = 1.0
    phase: float = 0.0

    def evaluate(self, grid):
        x, y = grid.mesh()
        return self.amp * np.cos(2 * np.pi * (self.kx * x + self.ky * y) + self.phase)


@dataclasses.dataclass(frozen=True)
class VelocityMode:
    """Velocity component ``comp`` gets ``amp * cos(2 pi k.x + phase) * cos(pi m z)``.

    The ``cos(pi m z)`` family has vanishing derivative at both faces, so the
    Neumann compatibility condition holds for every member.
    """

    comp: int
    kx: int
    ky: int = 0
    m: int = 0
    amp: float = 1.0
    phase: float = 0.0

    def evaluate(self, grid):
        horiz = SurfaceMode(self.kx, self.ky, self.amp, self.phase).evaluate(grid)
        return np.cos(np.pi * self.m * zcol(grid.z)) * horiz


def random_modes(grid: Grid, seed: int, n_surface: int = 3, n_velocity: int = 4,
                 kmax: int = 3, mmax: int = 3):
    """Draw a reproducible mode set.

    Algorithm (numpy ``PCG64`` seeded with ``seed``): for each surface mode draw
    ``kx`` uniform in ``1..kmax`` (``ky`` in ``0..kmax`` when 2D), amplitude
    uniform on ``[-1, 1]`` divided by ``n_surface``, phase uniform on
    ``[0, 2 pi)``; for each velocity mode draw the component, ``kx`` in
    ``0..kmax``, ``ky`` likewise, vertical index ``m`` in ``0..mmax``, and
    amplitude / phase as above (divided by ``n_velocity``).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    two_d = grid.dim_h == 2
    surf = []
    for _ in range(n_surface):
        kx = int(rng.integers(1, kmax + 1))
        ky = int(rng.integers(0, kmax + 1)) if two_d else 0
        surf.append(SurfaceMode(kx, ky, float(rng.uniform(-1, 1)) / n_surface,
                                float(rng.uniform(0, 2 * np.pi))))
    vel = []
    for _ in range(n_velocity):
        comp = int(rng.integers(0, grid.dim_h))
        kx = int(rng.integers(0, kmax + 1))
        ky = int(rng.integers(0, kmax + 1)) if two_d else 0
        m = int(rng.integers(0, mmax + 1))
        vel.append(VelocityMode(comp, kx, ky, m, float(rng.uniform(-1, 1)) / n_velocity,
                                float(rng.uniform(0, 2 * np.pi))))
    return surf, vel


def mass_excess_of(zeta: np.ndarray, alpha: float) -> float:
    """``mean((1 + zeta)**(alpha+1)) - 1`` evaluated without cancellation."""
    terms = np.expm1((alpha + 1) * np.log1p(np.asarray(zeta, dtype=float)))
    return math.fsum(terms.ravel()) / terms.size


def normalize_mass(Z: np.ndarray, alpha: float) -> np.ndarray:
    """Scale ``Z`` by the scalar ``s`` for which ``mean((s Z)**(alpha+1)) == 1``.

    ``s = mean(Z**(alpha+1))**(-1/(alpha+1))`` in closed form.
    """
    if np.any(Z <= 0):
        raise ValueError("Z must be positive to be normalized")
    excess = mass_excess_of(Z - 1.0, alpha)
    return np.exp(-math.log1p(excess) / (alpha + 1)) * Z


def perturbed_ic(grid: Grid, params: Params, eps: float,
                 z_modes: Sequence[SurfaceMode] | None = None,
                 v_modes: Sequence[VelocityMode] | None = None,
                 seed: int = 0) -> State:
    """Small perturbation of the equilibrium with unit mass.

    ``Z0 = s (1 + eps * zeta)`` with ``s`` fixing the mass, ``v0 = eps * u``.
    When either mode list is ``None`` it is drawn with :func:`random_modes`.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps == 0:
        return equilibrium_state(grid, params)
    if z_modes is None or v_modes is None:
        rs, rv = random_modes(grid, seed)
        z_modes = rs if z_modes is None else z_modes
        v_modes = rv if v_modes is None else v_modes
    zeta = np.zeros(grid.hshape)
    for mode in z_modes:
        zeta += mode.evaluate(grid)
    Z = 1.0 + eps * zeta
    if np.any(Z <= 0):
        raise ValueError(f"eps={eps} makes Z non-positive")
    Z = normalize_mass(Z, params.alpha)
    v = np.zeros((grid.dim_h,) + grid.vshape)
    for mode in v_modes:
        if not 0 <= mode.comp < grid.dim_h:
            raise ValueError(f"velocity mode component {mode.comp} out of range")
        v[mode.comp] += mode.evaluate(grid)
    return State(0.0, Z, eps * v, params, grid)


def project_zero_momentum(state: State) -> State:
    """Subtract the constant velocity that carries the total momentum."""
    grid, alpha = state.grid, state.params.alpha
    rho_z = state.Z ** (alpha + 1)
    weight = mean_h(rho_z) * grid.quad_full.sum()
    mom = mean_h(vertical_avg_weighted(state.v, grid) * rho_z)
    shift = mom / weight
    return state.replace(v=state.v - shift[:, None, None, None])
