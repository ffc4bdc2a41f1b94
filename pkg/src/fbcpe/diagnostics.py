"""Scalar functionals: conserved quantities, energies, dissipations, decay fits.

Conventions shared by every functional:

* horizontal integrals are means over the uniform nodes of the unit torus;
* ``int z^alpha f dz`` uses the solver's weight table ``q_k``;
* unweighted vertical integrals use the cell midpoint rule;
* ``H^s_h`` norms are sums of squares of all horizontal derivatives of
  order ``<= s`` (every ordering of mixed derivatives counted).
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .dynamics import delta, full_rhs, velocity_gradient
from .grid import Grid, dz_center, dz_faces, dzz, grad_h, mean_h, vertical_avg_weighted
from .state import mass_excess_of

_GL_T, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


# ---------------------------------------------------------------------------
# integration helpers


def _wint(f, grid):
    """``int z^alpha f dx`` for a volume scalar (any leading axes summed)."""
    col = vertical_avg_weighted(f, grid)
    return float(np.sum(mean_h(col)))


def _uint(f, grid):
    """Unweighted ``int f dx`` for a volume scalar (midpoint in z)."""
    col = f.sum(axis=-3) * grid.dz
    return float(np.sum(mean_h(col)))


def _sint(f):
    """``int f dx`` for surface scalars (leading axes summed)."""
    return float(np.sum(mean_h(f)))


def _hgrad(f, grid):
    """Horizontal gradient with the derivative index prepended."""
    return grad_h(f, grid)


def _hhess(f, grid):
    g = grad_h(f, grid)
    return np.stack([grad_h(g[j], grid) for j in range(grid.dim_h)])


def _sq(a):
    return a * a


# ---------------------------------------------------------------------------
# conserved quantities


def mass_excess(state) -> float:
    """``int Z^(alpha+1) dx - 1`` without cancellation.

    Uses ``Z - 1`` together with the state's low-order part, so drifts far
    below one ulp of the mass itself remain visible.
    """
    return mass_excess_of(state.zeta, state.params.alpha)


def mass(state) -> float:
    """``int Z^(alpha+1) dx``."""
    return 1.0 + mass_excess(state)


def momentum(state) -> np.ndarray:
    """``int z^alpha Z^(alpha+1) v dx``, one entry per horizontal component."""
    col = vertical_avg_weighted(state.v, state.grid)
    return mean_h(state.Z ** (state.params.alpha + 1) * col)


def potential_density(Z: np.ndarray, alpha: float) -> np.ndarray:
    """``((Z^(a+2) - 1) - (a+2)/(a+1) (Z^(a+1) - 1)) / (a+2)`` without cancellation.

    Written as ``zeta^2 int_0^1 t (1 + t zeta)^alpha dt`` with ``zeta = Z - 1``
    and evaluated by Gauss-Legendre quadrature, which keeps full relative
    precision for tiny perturbations.
    """
    zeta = np.asarray(Z, dtype=float) - 1.0
    base = 1.0 + np.multiply.outer(zeta, _GL_T)
    inner = (base ** alpha) @ (_GL_T * _GL_W)
    return zeta * zeta * inner


def kinetic_energy(state) -> float:
    alpha = state.params.alpha
    v2 = np.sum(state.v * state.v, axis=0)
    return 0.5 * _wint(state.Z ** (alpha + 1) * v2, state.grid)


def potential_energy(state) -> float:
    return state.params.g * float(mean_h(potential_density(state.Z, state.params.alpha)))


def basic_energy(state) -> float:
    """Kinetic plus potential energy relative to the equilibrium."""
    return kinetic_energy(state) + potential_energy(state)


def basic_dissipation(state) -> float:
    """``int Z (mu |grad_h v|^2 + (mu+lam) |div_h v|^2 + mu |d_z v|^2) dx``.

    ``d_z v`` is taken on the interior faces (the mirror condition makes it
    vanish on the outer faces); this is the exact rate at which the solver's
    viscous operator removes basic energy.
    """
    grid, p = state.grid, state.params
    dv = velocity_gradient(state.v, grid)
    grad2 = np.sum(dv * dv, axis=(0, 1))
    divv = sum(dv[j, j] for j in range(grid.dim_h))
    face = dz_faces(state.v, grid)
    col = (grid.dz * (p.mu * grad2 + (p.mu + p.lam) * divv * divv).sum(axis=0)
           + grid.dz * p.mu * np.sum(face * face, axis=(0, 1)))
    return float(mean_h(state.Z * col))


# ---------------------------------------------------------------------------
# higher-order functionals


def _tendencies(state, v_t, Z_t):
    if v_t is None or Z_t is None:
        zt, vt = full_rhs(state)
        v_t = vt if v_t is None else v_t
        Z_t = zt if Z_t is None else Z_t
    return v_t, Z_t


def total_energy(state, v_t: np.ndarray | None = None, Z_t: np.ndarray | None = None) -> float:
    """Weighted Sobolev energy of ``(v, v_t, Z - 1, Z_t)``.

    Sum of ``|z^(a/2) v|^2_{H^2_h}``, ``|z^(a/2) v_t|^2``,
    ``|z^(a/2) v_z|^2_{H^1_h}``, ``|v|^2_{H^1}``, ``|Z-1|^2_{H^2}`` and ``|Z_t|^2``.
    ``v_t`` and ``Z_t`` default to the active right-hand side.
    """
    grid = state.grid
    v_t, Z_t = _tendencies(state, v_t, Z_t)
    v = state.v
    gv = _hgrad(v, grid)
    hv = _hhess(v, grid)
    vz = dz_center(v, grid)
    gvz = _hgrad(vz, grid)
    zeta = state.Z - 1.0
    gz = _hgrad(zeta, grid)
    hz = _hhess(zeta, grid)
    terms = [
        _wint(_sq(v), grid) + _wint(_sq(gv), grid) + _wint(_sq(hv), grid),
        _wint(_sq(v_t), grid),
        _wint(_sq(vz), grid) + _wint(_sq(gvz), grid),
        _uint(_sq(v), grid) + _uint(_sq(gv), grid) + _uint(_sq(vz), grid),
        _sint(_sq(zeta)) + _sint(_sq(gz)) + _sint(_sq(hz)),
        _sint(_sq(Z_t)),
    ]
    return float(sum(terms))


def relative_energy(state, v_t: np.ndarray | None = None, Z_t: np.ndarray | None = None,
                    c: float | None = None) -> float:
    """Relative energy with coupling constant ``c`` (default ``mu / (8 g)``).

    Every term is taken as written, including the unweighted
    ``|grad_h^2 Z|^2`` contribution.
    """
    grid, p = state.grid, state.params
    alpha, mu, lam, g = p.alpha, p.mu, p.lam, p.g
    if c is None:
        c = mu / (8.0 * g)
    v_t, Z_t = _tendencies(state, v_t, Z_t)
    v, Z = state.v, state.Z
    Za1 = Z ** (alpha + 1)
    dv = velocity_gradient(v, grid)
    divv = sum(dv[j, j] for j in range(grid.dim_h))
    hv = _hhess(v, grid)
    vz = dz_center(v, grid)
    gvz = _hgrad(vz, grid)
    face = dz_faces(v, grid)
    gZ = _hgrad(Z, grid)
    hZ = _hhess(Z, grid)

    basic = basic_energy(state)
    coupling = (0.5 * mu * _uint(_sq(dv), grid)
                + 0.5 * (mu + lam) * _uint(_sq(divv), grid)
                + 0.5 * mu * grid.dz * float(np.sum(mean_h(np.sum(_sq(face), axis=(0, 1)))))
                - g / (alpha + 1) * _wint((Za1 - 1.0) * divv, grid))
    weighted = 0.5 * _wint(Za1 * (np.sum(_sq(v_t), axis=0)
                                  + np.sum(_sq(dv), axis=(0, 1))
                                  + np.sum(_sq(hv), axis=(0, 1, 2))
                                  + np.sum(_sq(vz), axis=0)
                                  + np.sum(_sq(gvz), axis=(0, 1))), grid)
    surface = 0.5 * g * _sint(Z ** alpha * Z_t ** 2
                              + Z ** alpha * np.sum(_sq(gZ), axis=0)
                              + np.sum(_sq(hZ), axis=(0, 1)))
    return float(basic + c * coupling + weighted + surface)


def _full_grad(f, grid):
    """3D gradient of a volume field: horizontal derivatives then ``d_z``."""
    return np.concatenate([_hgrad(f, grid), dz_center(f, grid)[None]])


def _full_hess_sq(f, grid):
    """Pointwise squared norm of all second derivatives (mirror conditions in z)."""
    hh = _hhess(f, grid)
    fz = dz_center(f, grid)
    hz = _hgrad(fz, grid)
    zz = dzz(f, grid)
    return (np.sum(_sq(hh), axis=(0, 1)) + 2.0 * np.sum(_sq(hz), axis=0) + _sq(zz))


def relative_dissipation(state, v_t: np.ndarray | None = None,
                         Z_t: np.ndarray | None = None) -> float:
    """Relative dissipation functional.

    ``mu/2 int Z (|grad v|^2 + |grad v_t|^2 + |grad^2 v|^2 + |grad^2 grad_h v|^2)``
    plus ``int z^a Z^a |v_t|^2`` plus ``int (|Z_t|^2 + |grad_h Z|^2 + |grad_h^2 Z|^2)``.
    """
    grid, p = state.grid, state.params
    v_t, Z_t = _tendencies(state, v_t, Z_t)
    v, Z = state.v, state.Z
    gv = _hgrad(v, grid)
    visc = (np.sum(_sq(_full_grad(v, grid)), axis=(0, 1))
            + np.sum(_sq(_full_grad(v_t, grid)), axis=(0, 1))
            + np.sum(_full_hess_sq(v, grid), axis=0)
            + np.sum(_full_hess_sq(gv, grid), axis=(0, 1)))
    gZ = _hgrad(Z, grid)
    hZ = _hhess(Z, grid)
    return float(0.5 * p.mu * _uint(Z * visc, grid)
                 + _wint(Z ** p.alpha * np.sum(_sq(v_t), axis=0), grid)
                 + _sint(_sq(Z_t) + np.sum(_sq(gZ), axis=0) + np.sum(_sq(hZ), axis=(0, 1))))


# ---------------------------------------------------------------------------
# records and fits


@dataclasses.dataclass(frozen=True)
class DiagRecord:
    """One time sample of every monitored scalar.

    Vector entries are padded to two components so 1D and 2D runs share the
    CSV layout.
    """

    t: float
    mass: float
    momentum: tuple
    E_basic: float
    D_basic: float
    E_total: float
    E_rel: float
    D_rel: float
    delta: tuple
    Zmin: float
    Zmax: float

    def row(self) -> list:
        return [self.t, self.mass, *self.momentum, self.E_basic, self.D_basic,
                self.E_total, self.E_rel, self.D_rel, *self.delta, self.Zmin, self.Zmax]


CSV_COLUMNS = ("t", "mass", "mom_x", "mom_y", "E_basic", "D_basic", "E_total",
               "E_rel", "D_rel", "delta_x", "delta_y", "Zmin", "Zmax")


def _pad2(vec):
    vec = [float(x) for x in np.atleast_1d(vec)]
    return tuple(vec + [0.0] * (2 - len(vec)))


def record(state) -> DiagRecord:
    """Evaluate every functional at ``state`` (``v_t`` from the active model)."""
    Z_t, v_t = full_rhs(state)
    return DiagRecord(
        t=float(state.t),
        mass=mass(state),
        momentum=_pad2(momentum(state)),
        E_basic=basic_energy(state),
        D_basic=basic_dissipation(state),
        E_total=total_energy(state, v_t, Z_t),
        E_rel=relative_energy(state, v_t, Z_t),
        D_rel=relative_dissipation(state, v_t, Z_t),
        delta=_pad2(delta(state)),
        Zmin=float(state.Z.min()),
        Zmax=float(state.Z.max()),
    )


def fit_decay_rate(t: Sequence[float], E: Sequence[float]):
    """Least-squares fit of ``log E = a - rate * t``.

    Non-positive samples are dropped. Returns ``(rate, r_squared)``; a
    constant series gives ``(0.0, 1.0)``.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    keep = np.isfinite(E) & (E > 0) & np.isfinite(t)
    t, E = t[keep], E[keep]
    if t.size < 3:
        raise ValueError("need at least 3 positive samples to fit a decay rate")
    y = np.log(E)
    tc = t - t.mean()
    yc = y - y.mean()
    sxx = float(tc @ tc)
    if sxx == 0:
        raise ValueError("sample times must not all coincide")
    slope = float(tc @ yc) / sxx
    ss_tot = float(yc @ yc)
    resid = yc - slope * tc
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(y @ y)) else 1.0 - ss_res / ss_tot
    return -slope, r2
