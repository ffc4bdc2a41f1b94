"""Physical-space reconstruction of a fixed-domain state.

The solver's vertical coordinate ``z'`` runs from the free surface
(``z' = 0``) to the ground (``z' = 1``). Physical heights are
``z_phys = Z (1 - z')``, so each column is stretched by the local surface
height ``Z``.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .grid import Params, grad_h, zcol
from .kinematics import surface_tendency, vertical_velocity


@dataclasses.dataclass(frozen=True, eq=False)
class PhysicalSnapshot:
    """Physical fields on the images of the solver's levels.

    Volume arrays have shape ``(nz, nx, ny)``; ``v`` keeps its component axis.
    ``clamped`` counts nodes where ``Z - z_phys`` came out negative and was set
    to zero.
    """

    t: float
    surface: np.ndarray
    z_phys: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    w: np.ndarray
    clamped: int


def enthalpy(depth: np.ndarray, params: Params) -> np.ndarray:
    """``rho^(gamma-1) = (gamma-1)/gamma * g * depth`` below the surface."""
    return (params.gamma - 1.0) / params.gamma * params.g * depth


def to_physical(state, W: np.ndarray | None = None, Z_t: np.ndarray | None = None,
                nz_phys: int | None = None) -> PhysicalSnapshot:
    """Map ``state`` back to physical coordinates.

    ``W`` and ``Z_t`` default to the values implied by ``state``. With
    ``nz_phys`` the result is resampled onto uniform physical levels (see
    :func:`resample_uniform`); otherwise the levels are the images of the
    solver's nodes, which avoids interpolation.
    """
    grid, params = state.grid, state.params
    Z, v = state.Z, state.v
    if W is None:
        W = vertical_velocity(Z, v, grid)
    if Z_t is None:
        Z_t = surface_tendency(Z, v, grid)
    zp = zcol(grid.z)
    z_phys = Z * (1.0 - zp)
    depth = Z - z_phys
    negative = depth < 0
    depth = np.where(negative, 0.0, depth)
    rho = enthalpy(depth, params) ** (1.0 / (params.gamma - 1.0))
    gZ = grad_h(Z, grid)
    v_dot_gZ = np.sum(v * gZ[:, None], axis=0)
    w = -(zp - 1.0) * (Z_t + v_dot_gZ) - Z * W
    snap = PhysicalSnapshot(float(state.t), Z.copy(), z_phys, rho, v.copy(), w,
                            int(np.count_nonzero(negative)))
    if nz_phys is not None:
        return resample_uniform(snap, nz_phys, params)
    return snap


def resample_uniform(snap: PhysicalSnapshot, nz_phys: int, params: Params) -> PhysicalSnapshot:
    """Linear resampling onto ``nz_phys`` evenly spaced heights per column.

    Heights run from ``0`` to the local surface; density is recomputed from
    its closed form, the velocities are interpolated. Intended for plotting.
    """
    if nz_phys < 2:
        raise ValueError("nz_phys must be at least 2")
    nz, nx, ny = snap.z_phys.shape
    frac = np.linspace(0.0, 1.0, nz_phys)
    z_new = frac[:, None, None] * snap.surface[None]
    v_new = np.empty(snap.v.shape[:1] + z_new.shape)
    w_new = np.empty(z_new.shape)
    for i in range(nx):
        for j in range(ny):
            # stored levels descend from the surface; np.interp wants ascending
            zc = snap.z_phys[::-1, i, j]
            w_new[:, i, j] = np.interp(z_new[:, i, j], zc, snap.w[::-1, i, j])
            for c in range(snap.v.shape[0]):
                v_new[c, :, i, j] = np.interp(z_new[:, i, j], zc, snap.v[c, ::-1, i, j])
    rho = enthalpy(snap.surface - z_new, params) ** (1.0 / (params.gamma - 1.0))
    return PhysicalSnapshot(snap.t, snap.surface, z_new, rho, v_new, w_new, snap.clamped)


def equilibrium_density_profile(z_phys, params: Params):
    """Stationary density ``[(gamma-1)/gamma * g * (1 - z)]^(1/(gamma-1))``.

    Returns ``(rho, out_of_range)``. Heights above the surface ``z = 1`` give
    zero density; heights outside ``[0, 1]`` are flagged.
    """
    z = np.asarray(z_phys, dtype=float)
    out = (z < 0) | (z > 1)
    depth = np.where(z > 1, 0.0, 1.0 - z)
    rho = enthalpy(depth, params) ** (1.0 / (params.gamma - 1.0))
    if rho.ndim == 0:
        return float(rho), bool(out)
    return rho, out


def surface_slope(snap: PhysicalSnapshot, params: Params, top_fraction: float = 0.1):
    """Log-log slope of ``rho`` against depth ``Z - z_phys`` near the surface.

    Uses, in every column, the levels within ``top_fraction`` of the column
    height below the surface and fits one least-squares line through all of
    them. The physical vacuum predicts ``1 / (gamma - 1)``.
    """
    depth = snap.surface[None] - snap.z_phys
    near = (depth > 0) & (depth <= top_fraction * snap.surface[None])
    x = np.log(depth[near])
    y = np.log(snap.rho[near])
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("not enough distinct levels near the surface")
    xc = x - x.mean()
    return float(np.sum(xc * (y - y.mean())) / np.sum(xc * xc))
