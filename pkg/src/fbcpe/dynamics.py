"""Momentum tendencies for both model variants and the mean-drift functional.

The semi-discretization is built so that the discrete analogues of mass,
momentum and basic-energy balance hold to round-off before time stepping.
Three choices make that work:

* every cell carries the mass ``m_k Z^(alpha+1)`` with ``m_k = q_k / dz`` (the
  same weights used by all diagnostics), in place of ``z_k^alpha Z^(alpha+1)``;
* the vertical mass flux ``G`` on cell faces is accumulated from the discrete
  continuity equation, so it vanishes at both faces;
* advection is written in skew-symmetric form, so it neither creates momentum
  nor kinetic energy.

In the continuum ``G / (z^alpha Z^(alpha+1))`` is the vertical velocity ``W``
and the advection terms reduce to ``v . grad_h v + W d_z v``.
"""

from __future__ import annotations

import numpy as np

from .grid import (Grid, Params, Variant, dealias_filter, dzz, mean_h, spec_fwd,
                   spec_inv, zcol)
from .kinematics import surface_tendency

def _symbols(grid):
    """Per-axis ``i k`` symbols on the transform layout."""
    ones_y = np.ones_like(grid.ky)[None, :]
    ones_x = np.ones_like(grid.kx)[:, None]
    syms = [1j * grid.kx[:, None] * ones_y, 1j * ones_x * grid.ky[None, :]]
    return syms[:grid.dim_h]


def velocity_gradient(v: np.ndarray, grid: Grid) -> np.ndarray:
    """``out[j, i] = d_j v_i``; shape ``(dim_h, dim_h, nz, nx, ny)``."""
    vh = spec_fwd(v, grid)
    return spec_inv(np.stack([s * vh for s in _symbols(grid)]), grid)


def _div_of(fields_h, grid):
    """Divergence given the spectra of the components (leading axis)."""
    syms = _symbols(grid)
    out = syms[0] * fields_h[0]
    for j in range(1, grid.dim_h):
        out = out + syms[j] * fields_h[j]
    return out


def mass_weights(grid: Grid) -> np.ndarray:
    """``m_k`` broadcast against ``(nz, nx, ny)``."""
    return zcol(grid.mass_weights)


def inertia(Z: np.ndarray, grid: Grid, params: Params) -> np.ndarray:
    """Diagonal of the momentum mass matrix for the active variant.

    Conservative: ``m_k Z^(alpha+1)``; non-conservative: ``m_k Z^alpha``.
    """
    alpha = params.alpha
    power = alpha + 1 if params.variant is Variant.CONSERVATIVE else alpha
    return mass_weights(grid) * Z ** power


def viscous_operator(Z: np.ndarray, v: np.ndarray, grid: Grid, params: Params) -> np.ndarray:
    """Weighted viscous force ``K v``; the tendency is ``K v / inertia``.

    Conservative: ``mu sum_j d_j(Z d_j v) + (mu+lam) grad(Z div v) + mu Z d_zz v``,
    which equals ``Z`` times the linearized viscosity plus the momentum
    correction. Non-conservative: ``mu (lap_h v + d_zz v)`` with no ``lam`` term.
    Both are symmetric and negative semidefinite in the grid inner product.
    """
    mu, lam = params.mu, params.lam
    if params.variant is Variant.NONCONSERVATIVE:
        vh = spec_fwd(v, grid)
        lap = spec_inv(grid.laplacian_symbol() * vh, grid)
        return mu * (lap + dzz(v, grid))
    syms = _symbols(grid)
    dv = velocity_gradient(v, grid)                # [j, i]
    divv = sum(dv[j, j] for j in range(grid.dim_h))
    # spectra of Z d_j v_i and Z div v in one transform
    stacked = spec_fwd(np.concatenate([(Z * dv).reshape((-1,) + dv.shape[2:]),
                                       (Z * divv)[None]]), grid)
    d = grid.dim_h
    zdv_h = stacked[:-1].reshape((d, d) + stacked.shape[1:])
    zdiv_h = stacked[-1]
    out_h = np.stack([
        mu * sum(syms[j] * zdv_h[j, i] for j in range(d)) + (mu + lam) * syms[i] * zdiv_h
        for i in range(d)])
    return spec_inv(out_h, grid) + mu * Z * dzz(v, grid)


def face_flux(Z: np.ndarray, v: np.ndarray, Zt: np.ndarray, grid: Grid) -> np.ndarray:
    """Vertical mass flux on the ``nz + 1`` cell faces, zero at both ends.

    Accumulated upward from the discrete continuity equation
    ``rho_t + div_h(rho v) + (G_{k+1/2} - G_{k-1/2}) / dz = 0`` with
    ``rho = m_k Z^(alpha+1)``.
    """
    alpha = grid.alpha
    m = mass_weights(grid)
    F = m * Z ** (alpha + 1) * v
    divF = spec_inv(_div_of(spec_fwd(F, grid), grid), grid)
    source = m * (alpha + 1) * Z ** alpha * Zt + divF
    G = np.zeros((grid.nz + 1,) + grid.hshape)
    G[1:] = -grid.dz * np.cumsum(source, axis=0)
    # the top value is round-off (sum of q_k equals 1/(alpha+1)); pin it
    G[-1] = 0.0
    return G


def advection(Z: np.ndarray, v: np.ndarray, Zt: np.ndarray, grid: Grid) -> np.ndarray:
    """Momentum-form transport ``rho (v . grad_h) v + G d_z v`` in skew form."""
    alpha = grid.alpha
    d = grid.dim_h
    F = mass_weights(grid) * Z ** (alpha + 1) * v
    divF = spec_inv(_div_of(spec_fwd(F, grid), grid), grid)
    dv = velocity_gradient(v, grid)                # [j, i]
    Fv_h = spec_fwd(F[:, None] * v[None], grid)  # [j, i] -> F_j v_i
    div_Fv = spec_inv(np.stack([_div_of(Fv_h[:, i], grid) for i in range(d)]), grid)
    F_grad_v = np.einsum("j...,ji...->i...", F, dv)
    A = 0.5 * (div_Fv + F_grad_v - v * divF)
    if grid.dealias:
        A = dealias_filter(A, grid)
    G = face_flux(Z, v, Zt, grid)
    jump = np.diff(v, axis=-3)                     # v_{k+1} - v_k on interior faces
    upper = np.zeros_like(v)
    lower = np.zeros_like(v)
    upper[:, :-1] = G[1:-1] * jump
    lower[:, 1:] = G[1:-1] * jump
    return A + (upper + lower) / (2 * grid.dz)


def explicit_tendency(Z: np.ndarray, v: np.ndarray, grid: Grid, params: Params):
    """``(Z_t, E)``: surface tendency and the non-viscous acceleration.

    ``E = -transport / (m Z^(alpha+1)) - g grad_h Z`` is shared by both variants.
    """
    alpha = params.alpha
    Zt = surface_tendency(Z, v, grid)
    A = advection(Z, v, Zt, grid)
    gZ = spec_inv(np.stack([s * spec_fwd(Z, grid) for s in _symbols(grid)]), grid)
    E = -A / (mass_weights(grid) * Z ** (alpha + 1)) - params.g * gZ[:, None]
    return Zt, E


def _rhs(state, variant):
    params = state.params.replace(variant=variant)
    Zt, E = explicit_tendency(state.Z, state.v, state.grid, params)
    K = viscous_operator(state.Z, state.v, state.grid, params)
    return E + K / inertia(state.Z, state.grid, params)


def momentum_rhs_conservative(state) -> np.ndarray:
    """``v_t`` of the model with linearized viscosity and momentum correction."""
    return _rhs(state, Variant.CONSERVATIVE)


def momentum_rhs_nonconservative(state) -> np.ndarray:
    """``v_t`` of the constant-viscosity model ``mu (lap_h v + d_zz v)``."""
    return _rhs(state, Variant.NONCONSERVATIVE)


def momentum_rhs(state) -> np.ndarray:
    return _rhs(state, state.params.variant)


def full_rhs(state):
    """``(Z_t, v_t)`` for the variant carried by ``state.params``."""
    Zt, E = explicit_tendency(state.Z, state.v, state.grid, state.params)
    K = viscous_operator(state.Z, state.v, state.grid, state.params)
    return Zt, E + K / inertia(state.Z, state.grid, state.params)


def linearized_rhs(state):
    """``(Z_t, v_t)`` of the system linearized about ``(Z, v) = (1, 0)``."""
    grid, params = state.grid, state.params
    ones = np.ones(grid.hshape)
    Zt = surface_tendency(ones, state.v, grid)
    K = viscous_operator(ones, state.v, grid, params)
    gZ = spec_inv(np.stack([s * spec_fwd(state.Z, grid) for s in _symbols(grid)]), grid)
    return Zt, K / mass_weights(grid) - params.g * gZ[:, None]


def delta(state) -> np.ndarray:
    """Mass-weighted mean velocity ``(alpha+1) int z^a Z^(a+1) v dx``."""
    grid, alpha = state.grid, state.params.alpha
    col = np.einsum("ikxy,k->ixy", state.v, grid.quad_full)
    return (alpha + 1) * mean_h(state.Z ** (alpha + 1) * col)


def delta_rate(state) -> np.ndarray:
    """``-(alpha+1) mu int (grad_h Z . grad_h) v dx`` for the non-conservative model.

    The ``mu`` factor accompanies the viscosity coefficient of the model; with
    ``mu = 1`` it is invisible.
    """
    grid, params = state.grid, state.params
    d = grid.dim_h
    gZ = spec_inv(np.stack([s * spec_fwd(state.Z, grid) for s in _symbols(grid)]), grid)
    dv = velocity_gradient(state.v, grid)          # [j, i]
    integrand = sum(gZ[j][None, None] * dv[j] for j in range(d))   # [i, k, x, y]
    col = integrand.sum(axis=1) * grid.dz
    return -(params.alpha + 1) * params.mu * mean_h(col)
