import numpy as np
import pytest

from fbcpe import Params, build_grid, equilibrium_state, perturbed_ic
from fbcpe.grid import zcol
from fbcpe.kinematics import (density, density_transport_residual, dz_weighted_w,
                              surface_tendency, surface_tendency_advective, vertical_velocity,
                              w_numerator)

from conftest import smooth_state


def _zindep(grid, fn):
    X = grid.mesh()[0]
    return np.broadcast_to(fn(X), grid.vshape)[None].copy()


def test_density_values():
    g1 = build_grid(1, 4, None, 2, 1.0)
    rho = density(np.ones(g1.hshape), g1)
    np.testing.assert_allclose(rho[:, 0, 0], g1.z)
    g2 = build_grid(1, 4, None, 2, 2.0)
    rho2 = density(np.full(g2.hshape, 2.0), g2)
    np.testing.assert_allclose(rho2[:, 0, 0], (2 * g2.z) ** 2)
    # vanishes towards the vacuum face
    fine = build_grid(1, 4, None, 4096, 1.0)
    assert density(np.ones(fine.hshape), fine)[0, 0, 0] < 1e-3


def test_surface_tendency_cases(grid1, params):
    s = equilibrium_state(grid1, params)
    assert np.max(np.abs(surface_tendency(s.Z, s.v, grid1))) == 0.0
    v = _zindep(grid1, lambda x: np.sin(2 * np.pi * x))
    Zt = surface_tendency(s.Z, v, grid1)
    X = grid1.mesh()[0]
    np.testing.assert_allclose(Zt, -np.pi * np.cos(2 * np.pi * X), atol=1e-12)
    const = np.full_like(v, 0.7)
    assert np.max(np.abs(surface_tendency(s.Z, const, grid1))) < 1e-14


def test_flux_and_product_forms_agree(params):
    # fine enough that the cubic products are not aliased
    grid2 = build_grid(2, 32, 32, 8, params.alpha)
    s = smooth_state(grid2, params, 3)
    a = surface_tendency(s.Z, s.v, grid2)
    b = surface_tendency_advective(s.Z, s.v, grid2)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_w_equilibrium_zero(grid1, params):
    s = equilibrium_state(grid1, params)
    assert np.max(np.abs(vertical_velocity(s.Z, s.v, grid1))) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_w_vanishes_for_z_independent_v(grid2, params, seed):
    s = smooth_state(grid2, params, seed)
    vbar = s.v.mean(axis=1, keepdims=True)
    v = np.broadcast_to(vbar, s.v.shape)
    assert np.max(np.abs(vertical_velocity(s.Z, v, grid2))) <= 1e-12


def test_w_analytic_case():
    grid = build_grid(1, 32, None, 24, 1.0)
    X = grid.mesh()[0]
    z = zcol(grid.z)
    v = (z * np.sin(2 * np.pi * X))[None]
    W = vertical_velocity(np.ones(grid.hshape), v, grid)
    exact = (2 * np.pi / 3) * np.cos(2 * np.pi * X) * z * (1 - z)
    assert np.max(np.abs(W - exact)) <= 1e-12


@pytest.mark.parametrize("dim", [1, 2])
def test_w_top_numerator_vanishes(params, dim):
    grid = build_grid(dim, 16, 16, 8, params.alpha)
    for seed in range(4):
        s = smooth_state(grid, params, seed, eps=0.05)
        assert np.max(np.abs(w_numerator(s.Z, s.v, grid, top=True))) <= 1e-13


def test_dz_weighted_w_closed_form():
    grid = build_grid(1, 32, None, 64, 1.0)
    X = grid.mesh()[0]
    z = zcol(grid.z)
    v = (z * np.sin(2 * np.pi * X))[None]
    Z = np.ones(grid.hshape)
    exact = 2 * np.pi * np.cos(2 * np.pi * X) * z * (2.0 / 3.0 - z)
    np.testing.assert_allclose(dz_weighted_w(Z, v, grid), exact, atol=1e-12)
    # centred difference of z^a W agrees to second order in dz
    errs = []
    for nz in (16, 32, 64):
        g = build_grid(1, 32, None, nz, 1.0)
        zz = zcol(g.z)
        vv = (zz * np.sin(2 * np.pi * X))[None]
        f = zz * vertical_velocity(Z, vv, g)
        cd = (f[2:] - f[:-2]) / (2 * g.dz)
        errs.append(np.max(np.abs(cd - dz_weighted_w(Z, vv, g)[1:-1])))
    assert 1.8 < np.log2(errs[0] / errs[1]) < 2.2
    assert 1.8 < np.log2(errs[1] / errs[2]) < 2.2


def test_dz_weighted_w_z_independent(grid1, params):
    v = _zindep(grid1, lambda x: np.sin(2 * np.pi * x))
    out = dz_weighted_w(np.ones(grid1.hshape), v, grid1)
    assert np.max(np.abs(out)) < 1e-12


def test_density_residual_second_order(params):
    res = []
    for nz in (32, 64, 128):
        grid = build_grid(1, 32, None, nz, params.alpha)
        s = smooth_state(grid, params, 1, eps=0.05)
        res.append(np.max(np.abs(density_transport_residual(s.Z, s.v, grid))))
    orders = np.log2(np.array(res[:-1]) / res[1:])
    assert np.all((orders > 1.8) & (orders < 2.2)), orders
