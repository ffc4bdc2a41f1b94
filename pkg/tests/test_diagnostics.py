import numpy as np
import pytest

from fbcpe import Params, build_grid, equilibrium_state, project_zero_momentum
from fbcpe.diagnostics import (CSV_COLUMNS, basic_dissipation, basic_energy, fit_decay_rate,
                               mass, momentum, potential_density, record, relative_dissipation,
                               relative_energy, total_energy)
from fbcpe.grid import div_h, grad_h, zcol

from conftest import smooth_state


def _state(grid, params, Z=None, v=None):
    s = equilibrium_state(grid, params)
    return s.replace(Z=s.Z if Z is None else Z, v=s.v if v is None else v)


def _cos(grid, amp=0.1):
    return (1 + amp * np.cos(2 * np.pi * grid.x))[:, None] * np.ones(grid.ny)


def test_mass_values(grid1, params):
    assert mass(equilibrium_state(grid1, params)) == 1.0
    assert mass(_state(grid1, params, Z=np.full(grid1.hshape, 2 ** 0.5))) == pytest.approx(2.0,
                                                                                       rel=1e-15)
    assert mass(_state(grid1, params, Z=_cos(grid1))) == pytest.approx(1.005, abs=1e-15)


def test_momentum_values(grid2, params):
    assert np.all(momentum(equilibrium_state(grid2, params)) == 0.0)
    v = np.zeros((2,) + grid2.vshape)
    v[0] = 0.6
    np.testing.assert_allclose(momentum(_state(grid2, params, v=v)), [0.3, 0.0], atol=1e-15)
    s = project_zero_momentum(smooth_state(grid2, params, 9))
    assert np.max(np.abs(momentum(s))) <= 1e-14


def test_basic_energy_values(grid1, params):
    assert basic_energy(equilibrium_state(grid1, params)) == 0.0
    s = _state(grid1, params, v=np.full((1,) + grid1.vshape, 0.8))
    assert basic_energy(s) == pytest.approx(0.8 ** 2 / 4, rel=1e-14)
    d = 1e-2
    s = _state(grid1, params, Z=np.full(grid1.hshape, 1 + d))
    closed = (((1 + d) ** 3 - 1) - 1.5 * ((1 + d) ** 2 - 1)) / 3
    assert basic_energy(s) == pytest.approx(closed, rel=1e-12)
    assert basic_energy(s) == pytest.approx(d * d / 2, rel=0.02)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_potential_density_closed_form(alpha):
    Z = np.array([0.7, 0.99, 1.3, 1.9])
    a = alpha
    closed = ((Z ** (a + 2) - 1) - (a + 2) / (a + 1) * (Z ** (a + 1) - 1)) / (a + 2)
    np.testing.assert_allclose(potential_density(Z, a), closed, rtol=1e-12)


def test_basic_dissipation_values(grid1):
    params = Params(mu=1.0, lam=0.0)
    assert basic_dissipation(equilibrium_state(grid1, params)) == 0.0
    X = grid1.mesh()[0]
    v = np.broadcast_to(np.sin(2 * np.pi * X), grid1.vshape)[None]
    # mu |d_x v|^2 + (mu + lam) |div v|^2, each integrating to 2 pi^2; no d_z part
    assert basic_dissipation(_state(grid1, params, v=v)) == pytest.approx(4 * np.pi ** 2,
                                                                          rel=1e-13)


def test_total_energy_properties(grid2, params):
    assert total_energy(equilibrium_state(grid2, params)) == 0.0
    s = smooth_state(grid2, params, 1, eps=1e-3)
    E1 = total_energy(s)
    big = s.replace(Z=1 + 2 * (s.Z - 1), v=2 * s.v)
    assert abs(total_energy(big) / E1 - 4.0) <= 0.4
    assert E1 >= np.mean((s.Z - 1) ** 2)


def test_relative_energy_cross_term_parity(grid1, params):
    s = smooth_state(grid1, params, 5, eps=0.05)
    zero_t = np.zeros_like(s.v), np.zeros_like(s.Z)
    a = relative_energy(s, *zero_t)
    b = relative_energy(s.replace(v=-s.v), *zero_t)
    c = params.mu / (8 * params.g)
    alpha = params.alpha
    # oracle: the only odd term is -(g/(a+1)) int z^a (Z^(a+1) - 1) div v
    weighted = np.einsum("kxy,k->xy", div_h(s.v, grid1), grid1.quad_full)
    cross = -params.g / (alpha + 1) * np.mean((s.Z ** (alpha + 1) - 1) * weighted)
    assert a - b == pytest.approx(2 * c * cross, rel=1e-9)
    assert relative_energy(equilibrium_state(grid1, params)) == 0.0


def test_relative_dissipation_properties(grid2, params):
    assert relative_dissipation(equilibrium_state(grid2, params)) == 0.0
    s = smooth_state(grid2, params, 3)
    assert relative_dissipation(s) >= np.sum(np.mean(grad_h(s.Z, grid2) ** 2, axis=(-2, -1)))


def test_relative_dissipation_vertical_convergence(params):
    """Frozen analytic state: vertical refinement converges at second order."""
    vals = []
    for nz in (16, 32, 64, 128):
        grid = build_grid(1, 16, None, nz, params.alpha)
        X = grid.mesh()[0]
        z = zcol(grid.z)
        v = (0.01 * np.cos(np.pi * z) * np.sin(2 * np.pi * X))[None]
        Z = 1 + 0.01 * np.cos(2 * np.pi * X)
        s = _state(grid, params, Z=Z, v=v)
        vals.append(relative_dissipation(s, np.zeros_like(v), np.zeros_like(Z)))
    d = np.abs(np.diff(vals))
    assert 1.8 < np.log2(d[0] / d[1]) < 2.2 and 1.8 < np.log2(d[1] / d[2]) < 2.2


def test_record_row_layout(grid1, params):
    rec = record(smooth_state(grid1, params, 0))
    assert len(rec.row()) == len(CSV_COLUMNS)
    assert rec.row()[0] == 0.0 and rec.row()[3] == 0.0


def test_fit_decay_rate():
    t = np.linspace(0, 5, 51)
    rate, r2 = fit_decay_rate(t, np.exp(-2 * t))
    assert abs(rate - 2.0) < 1e-10 and r2 == pytest.approx(1.0, abs=1e-12)
    assert fit_decay_rate(t, np.full_like(t, 3.0))[0] == 0.0
    rate, _ = fit_decay_rate(t, 5 * np.exp(-0.7 * t) * (1 + 0.01 * np.sin(t)))
    assert abs(rate - 0.7) < 0.02
    with pytest.raises(ValueError):
        fit_decay_rate([0, 1], [1, 2])
