"""Fields fixed algebraically by ``(Z, v)``: density, ``Z_t``, ``W`` and ``d_z(z^alpha W)``.

Every function takes the surface field ``Z`` (shape ``(nx, ny)``) and the
velocity ``v`` (shape ``(dim_h, nz, nx, ny)``) together with the grid they
live on.
"""

from __future__ import annotations

import numpy as np

from .grid import (Grid, Params, cumulative_weighted, div_h, grad_h,
                   vertical_avg_weighted, zcol)


def _require_positive(Z):
    if np.any(~(Z > 0)):
        from .state import ValidityBandError
        raise ValidityBandError(float("nan"), float(np.min(Z)), float(np.max(Z)))


def density(Z: np.ndarray, grid: Grid, params: Params | None = None) -> np.ndarray:
    """``rho = z**alpha * Z**alpha`` at every cell centre (normalizing constant set to 1)."""
    alpha = grid.alpha if params is None else params.alpha
    return zcol(grid.z) ** alpha * Z ** alpha


def weighted_means(v: np.ndarray, grid: Grid):
    """``(int z^a v dz, int z^a div_h v dz)`` per horizontal node."""
    vbar = vertical_avg_weighted(v, grid)
    return vbar, div_h(vbar, grid)


def surface_tendency(Z: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """``Z_t = -(alpha+1) vbar . grad Z - Z div vbar`` with ``vbar = int z^a v dz``.

    Evaluated in the equivalent flux form ``-div(Z^(alpha+1) vbar) / Z^alpha``.
    The two agree in the continuum; the flux form makes
    ``int Z^alpha Z_t dx`` vanish to round-off on the discrete torus, so the
    scheme conserves mass exactly before time discretization.
    """
    alpha = grid.alpha
    vbar = vertical_avg_weighted(v, grid)
    return -div_h(Z ** (alpha + 1) * vbar, grid) / Z ** alpha


def surface_tendency_advective(Z: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """The same tendency evaluated term by term (product-rule form)."""
    alpha = grid.alpha
    vbar, divbar = weighted_means(v, grid)
    gZ = grad_h(Z, grid)
    return -(alpha + 1) * np.sum(vbar * gZ, axis=0) - divbar * Z


def w_numerator(Z: np.ndarray, v: np.ndarray, grid: Grid, top: bool = False) -> np.ndarray:
    """Numerator of ``W`` (everything except the ``1 / (z^a Z)`` factor).

    With ``top=True`` the formula is evaluated at ``z = 1`` with the cumulative
    table carried to the upper face (its last row extended over the top half
    cell), which is the discrete counterpart of ``W = 0`` there. The result then
    has shape ``(1, nx, ny)``.
    """
    alpha = grid.alpha
    gZ = grad_h(Z, grid)
    vbar, divbar = weighted_means(v, grid)
    surf = (alpha + 1) * np.sum(vbar * gZ, axis=0) + divbar * Z
    if top:
        levels = np.ones(1)
        cum_v = np.einsum("...jxy,kj->...kxy", v, grid.quad_full[None, :])
    else:
        levels = grid.z
        cum_v = cumulative_weighted(v, grid)
    cum_div = div_h(cum_v, grid)
    return (zcol(levels) ** (alpha + 1) * surf
            - (alpha + 1) * np.sum(cum_v * gZ[:, None], axis=0)
            - cum_div * Z)


def vertical_velocity(Z: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """Transformed vertical velocity ``W`` at the cell centres.

    Returns an array of shape ``(nz, nx, ny)``. The division by ``z_k**alpha``
    is bounded by ``(2 nz)**alpha`` because no node sits on ``z = 0``.
    """
    _require_positive(Z)
    return w_numerator(Z, v, grid) / (zcol(grid.z) ** grid.alpha * Z)


def dz_weighted_w(Z: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """Closed-form ``d_z(z^alpha W)``; no vertical differencing involved."""
    _require_positive(Z)
    alpha = grid.alpha
    glogZ = grad_h(Z, grid) / Z
    vbar, divbar = weighted_means(v, grid)
    za = zcol(grid.z) ** alpha
    surf = (alpha + 1) * np.sum(vbar * glogZ, axis=0) + divbar
    return ((alpha + 1) * za * surf
            - (alpha + 1) * za * np.sum(v * glogZ[:, None], axis=0)
            - za * div_h(v, grid))


def density_transport_residual(Z: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """Residual of the weighted continuity equation at interior cells.

    ``d_t(z^a Z^(a+1)) + div_h(z^a Z^(a+1) v) + d_z(z^a Z^(a+1) W)`` with ``Z_t``
    from :func:`surface_tendency`, ``W`` from :func:`vertical_velocity` and the
    last derivative taken by centred differences. Shape ``(nz - 2, nx, ny)``.
    """
    alpha = grid.alpha
    Zt = surface_tendency(Z, v, grid)
    W = vertical_velocity(Z, v, grid)
    za = zcol(grid.z) ** alpha
    flux = za * Z ** (alpha + 1) * W
    dflux = (flux[2:] - flux[:-2]) / (2 * grid.dz)
    res = (za * (alpha + 1) * Z ** alpha * Zt
           + div_h(za * Z ** (alpha + 1) * v, grid)
           + np.concatenate([np.zeros_like(flux[:1]), dflux, np.zeros_like(flux[:1])]))
    return res[1:-1]
