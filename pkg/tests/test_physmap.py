import numpy as np
import pytest

from fbcpe import Params, build_grid, equilibrium_state, perturbed_ic, to_physical
from fbcpe.kinematics import vertical_velocity
from fbcpe.physmap import equilibrium_density_profile, resample_uniform, surface_slope


def test_equilibrium_profile_is_linear():
    params = Params(gamma=2.0, g=2.0)
    grid = build_grid(1, 8, None, 16, params.alpha)
    snap = to_physical(equilibrium_state(grid, params))
    np.testing.assert_allclose(snap.rho, 1 - snap.z_phys, atol=1e-15)
    assert np.all(snap.surface == 1.0) and np.all(snap.w == 0.0)
    assert snap.clamped == 0


def test_density_closed_form_points():
    assert equilibrium_density_profile(1.0, Params(gamma=2.0, g=2.0))[0] == 0.0
    assert equilibrium_density_profile(0.0, Params(gamma=2.0, g=2.0))[0] == pytest.approx(1.0)
    # (gamma-1)/gamma * g * (1 - z) = 2/3 * 3 * 0.5 = 1
    rho, out = equilibrium_density_profile(0.5, Params(gamma=3.0, g=3.0))
    assert rho == pytest.approx(1.0, rel=1e-15) and not out
    # with a unit coefficient the same depth gives 0.5^(1/2)
    rho, _ = equilibrium_density_profile(0.5, Params(gamma=3.0, g=1.5))
    assert rho == pytest.approx(np.sqrt(0.5), rel=1e-15)
    assert equilibrium_density_profile(1.5, Params())[1]


def test_surface_and_bottom_values(params):
    fine = build_grid(1, 16, None, 512, params.alpha)
    s = perturbed_ic(fine, params, 1e-2, seed=3)
    snap = to_physical(s)
    # nearest node to the surface: density tends to zero with the depth
    assert np.max(snap.rho[0]) < 2e-3
    # nearest node to the ground: w matches -Z W, which vanishes at the ground
    W = vertical_velocity(s.Z, s.v, fine)
    assert np.max(np.abs(snap.w[-1])) < 10 * fine.dz * np.max(np.abs(snap.w))
    assert np.max(np.abs(W[-1])) < 10 * fine.dz * np.max(np.abs(W))


def test_round_trip_coordinates(params):
    grid = build_grid(2, 8, 8, 12, params.alpha)
    s = perturbed_ic(grid, params, 1e-2, seed=0)
    snap = to_physical(s)
    np.testing.assert_allclose(1 - snap.z_phys / s.Z, grid.z[:, None, None] + 0 * s.Z,
                               atol=1e-14)


@pytest.mark.parametrize("gamma", [2.0, 3.0])
def test_vacuum_slope(gamma):
    params = Params(gamma=gamma)
    grid = build_grid(1, 16, None, 64, params.alpha)
    snap = to_physical(perturbed_ic(grid, params, 1e-3, seed=1))
    assert surface_slope(snap, params) == pytest.approx(1 / (gamma - 1), rel=0.05)


def test_resample_uniform(params):
    grid = build_grid(1, 8, None, 16, params.alpha)
    snap = to_physical(perturbed_ic(grid, params, 1e-2, seed=0), nz_phys=10)
    assert snap.z_phys.shape == (10, 8, 1)
    np.testing.assert_allclose(snap.z_phys[-1], snap.surface)
    assert np.all(snap.rho[-1] == 0.0)
    with pytest.raises(ValueError):
        resample_uniform(snap, 1, params)
