"""Time integration with implicit treatment of the weighted viscous operator.

The surface field ``Z`` is always advanced explicitly, so every implicit
stage solves a *linear* symmetric positive definite system

    (M(Z_i) - theta K(Z_i)) v_i = M(Z_i) r_i,

where ``M`` is the diagonal mass of :func:`fbcpe.dynamics.inertia` and ``K``
the viscous operator. It is solved by preconditioned conjugate gradients; the
preconditioner is the same operator frozen at a constant ``Z``, which is
diagonal in horizontal Fourier modes and tridiagonal in ``z`` per mode.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math

import numpy as np

from .dynamics import explicit_tendency, full_rhs, inertia, viscous_operator
from .grid import Grid, Params, Variant, spec_fwd, spec_inv
from .kinematics import vertical_velocity
from .state import State, ValidityBandError


class Scheme(enum.Enum):
    IMEX_EULER = "ImexEuler"
    IMEX_MIDPOINT = "ImexMidpoint"
    IMEX_ARS222 = "ImexARS222"
    EXPLICIT_RK2 = "ExplicitRK2"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        for member in cls:
            if member.value.lower() == str(name).strip().lower():
                return member
        raise ValueError(f"unknown scheme {name!r}; expected one of "
                         + ", ".join(m.value for m in cls))


@dataclasses.dataclass(frozen=True)
class StepConfig:
    """``dt`` is both the step used by :func:`step` and the cap of :func:`suggest_dt`."""

    dt: float
    scheme: Scheme = Scheme.IMEX_MIDPOINT
    cfl_safety: float = 0.9
    rtol: float = 1e-13
    maxiter: int = 200

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")


class LinearSolveError(RuntimeError):
    """The implicit viscous solve did not reach its tolerance."""


# ---------------------------------------------------------------------------
# IMEX tableaux (first stage explicit, diagonally implicit afterwards)


@dataclasses.dataclass(frozen=True)
class _Tableau:
    AE: np.ndarray
    AI: np.ndarray
    bE: np.ndarray
    bI: np.ndarray


def _tableau(scheme: Scheme) -> _Tableau:
    if scheme is Scheme.IMEX_EULER:
        return _Tableau(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]),
                        np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    if scheme is Scheme.IMEX_MIDPOINT:
        return _Tableau(np.array([[0.0, 0.0], [0.5, 0.0]]), np.array([[0.0, 0.0], [0.0, 0.5]]),
                        np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    if scheme is Scheme.IMEX_ARS222:
        gam = 1.0 - 1.0 / math.sqrt(2.0)
        dlt = 1.0 - 1.0 / (2.0 * gam)
        AE = np.array([[0.0, 0.0, 0.0], [gam, 0.0, 0.0], [dlt, 1.0 - dlt, 0.0]])
        AI = np.array([[0.0, 0.0, 0.0], [0.0, gam, 0.0], [0.0, 1.0 - gam, gam]])
        return _Tableau(AE, AI, AE[-1].copy(), AI[-1].copy())
    raise ValueError(f"{scheme} is not an IMEX scheme")


# ---------------------------------------------------------------------------
# preconditioner


def _neumann_second_difference(nz, dz):
    """Tridiagonal bands of ``d_zz`` with mirror ghosts."""
    main = np.full(nz, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(nz - 1)
    return main / dz ** 2, off / dz ** 2


def _batched_tridiag_inverse(diag, off):
    """Inverse of symmetric tridiagonal matrices with per-batch diagonals.

    ``diag`` has shape ``(B, n)``, ``off`` shape ``(B, n-1)``. The inverse is
    formed by the Thomas algorithm applied to the identity, using only
    elementwise numpy operations so the result is independent of BLAS
    threading.
    """
    B, n = diag.shape
    rhs = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    c = np.zeros((B, n - 1))
    dprime = diag[:, 0].copy()
    rhs[:, 0] /= dprime[:, None]
    c[:, 0] = off[:, 0] / dprime
    for i in range(1, n):
        denom = diag[:, i] - off[:, i - 1] * c[:, i - 1]
        if i < n - 1:
            c[:, i] = off[:, i] / denom
        rhs[:, i] = (rhs[:, i] - off[:, i - 1, None] * rhs[:, i - 1]) / denom[:, None]
    for i in range(n - 2, -1, -1):
        rhs[:, i] -= c[:, i, None] * rhs[:, i + 1]
    return rhs


@dataclasses.dataclass(frozen=True, eq=False)
class _Preconditioner:
    grid: Grid
    inv_long: np.ndarray    # (nz, nz, *spectral shape)
    inv_trans: np.ndarray | None
    khat: np.ndarray | None  # (dim_h, *spectral shape) unit wave vectors, 0 at k = 0

    def apply(self, r: np.ndarray) -> np.ndarray:
        grid = self.grid
        rh = spec_fwd(r, grid)
        if self.khat is None:
            out = np.einsum("kjxy,ijxy->ikxy", self.inv_long, rh)
        else:
            long_part = np.einsum("ixy,ijxy->jxy", self.khat, rh)
            trans = rh - self.khat[:, None] * long_part[None]
            out = (self.khat[:, None] * np.einsum("kjxy,jxy->kxy", self.inv_long, long_part)[None]
                   + np.einsum("kjxy,ijxy->ikxy", self.inv_trans, trans))
        return spec_inv(out, grid)


@functools.lru_cache(maxsize=32)
def _preconditioner(grid: Grid, params: Params, theta: float, zref: float) -> _Preconditioner:
    alpha, mu, lam = params.alpha, params.mu, params.lam
    nz = grid.nz
    k2 = (grid.kx[:, None] ** 2 + grid.ky[None, :] ** 2)
    main, off = _neumann_second_difference(nz, grid.dz)
    m = grid.mass_weights
    if params.variant is Variant.CONSERVATIVE:
        mass, visc_z = m * zref ** (alpha + 1), mu * zref
        coef_long, coef_trans = (2 * mu + lam) * zref, mu * zref
    else:
        mass, visc_z = m * zref ** alpha, mu
        coef_long = coef_trans = mu

    def inverse(coef):
        flat_k2 = k2.ravel()
        diag = (mass[None, :] + theta * coef * flat_k2[:, None]
                - theta * visc_z * main[None, :])
        offd = np.broadcast_to(-theta * visc_z * off, (flat_k2.size, nz - 1))
        inv = _batched_tridiag_inverse(diag, offd)
        return np.ascontiguousarray(inv.reshape(k2.shape + (nz, nz)).transpose(2, 3, 0, 1))

    inv_long = inverse(coef_long)
    if grid.dim_h == 1 or coef_long == coef_trans:
        return _Preconditioner(grid, inv_long, None, None)
    kmag = np.sqrt(k2)
    safe = np.where(kmag > 0, kmag, 1.0)
    khat = np.stack([grid.kx[:, None] * np.ones_like(grid.ky)[None, :] / safe,
                     np.ones_like(grid.kx)[:, None] * grid.ky[None, :] / safe])
    khat[:, kmag == 0] = 0.0
    inv_trans = inverse(coef_trans)
    # khat = 0 at k = 0 sends that mode through the transverse block; both agree there
    return _Preconditioner(grid, inv_long, inv_trans, khat)


def _dot(a, b):
    # numpy's own pairwise summation; no BLAS, so the order never depends on threads
    return float(np.sum(a * b))


def solve_implicit(Z: np.ndarray, rhs_v: np.ndarray, theta: float, grid: Grid,
                   params: Params, rtol: float = 1e-13, maxiter: int = 200) -> np.ndarray:
    """Solve ``(M - theta K) x = M rhs_v`` by preconditioned CG.

    After convergence a constant per component is added so the residual has
    zero sum; since ``K`` annihilates constants this makes the solve conserve
    ``sum(M x)`` to round-off regardless of the CG tolerance.
    """
    M = inertia(Z, grid, params)
    b = M * rhs_v
    bnorm = math.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(rhs_v)
    zref = round(float(np.mean(Z)), 3)
    P = _preconditioner(grid, params, float(theta), zref)

    def A(x):
        return M * x - theta * viscous_operator(Z, x, grid, params)

    x = rhs_v.copy()
    r = b - A(x)
    z = P.apply(r)
    p = z.copy()
    rz = _dot(r, z)
    converged = False
    for _ in range(maxiter):
        if math.sqrt(_dot(r, r)) <= rtol * bnorm:
            converged = True
            break
        Ap = A(p)
        step = rz / _dot(p, Ap)
        x = x + step * p
        r = r - step * Ap
        z = P.apply(r)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not converged:
        r = b - A(x)
        rel = math.sqrt(_dot(r, r)) / bnorm
        if rel > rtol:
            raise LinearSolveError(f"implicit solve stalled at relative residual {rel:.3e}")
    r = b - A(x)
    axes = tuple(range(1, r.ndim))
    shift = np.sum(r, axis=axes) / np.sum(M)
    return x + shift.reshape((-1,) + (1,) * (r.ndim - 1))


# ---------------------------------------------------------------------------
# steps


def _check_positive(Z, t):
    if not np.all(Z > 0):
        raise ValidityBandError(t, float(np.min(Z)), float(np.max(Z)))


def _imex_step(state: State, config: StepConfig) -> State:
    tab = _tableau(config.scheme)
    grid, params, dt = state.grid, state.params, config.dt
    s = len(tab.bE)
    Z0, v0 = state.Z, state.v
    Zts, Es, Is = [None] * s, [None] * s, [None] * s
    need_tend = [bool(tab.bE[i] != 0 or np.any(tab.AE[i + 1:, i] != 0)) for i in range(s)]
    need_impl = [bool(tab.bI[i] != 0 or np.any(tab.AI[i + 1:, i] != 0)) for i in range(s)]
    Zi = vi = None
    for i in range(s):
        Zi = Z0 + dt * sum(tab.AE[i, j] * Zts[j] for j in range(i) if tab.AE[i, j] != 0) \
            if i else Z0
        _check_positive(Zi, state.t)
        rhs_v = v0.copy()
        for j in range(i):
            if tab.AE[i, j] != 0:
                rhs_v += dt * tab.AE[i, j] * Es[j]
            if tab.AI[i, j] != 0:
                rhs_v += dt * tab.AI[i, j] * Is[j]
        aii = tab.AI[i, i]
        if aii != 0:
            theta = dt * aii
            vi = solve_implicit(Zi, rhs_v, theta, grid, params, config.rtol, config.maxiter)
            Is[i] = (vi - rhs_v) / theta
        else:
            vi = rhs_v
            if need_impl[i]:
                Is[i] = viscous_operator(Zi, vi, grid, params) / inertia(Zi, grid, params)
        if need_tend[i]:
            Zts[i], Es[i] = explicit_tendency(Zi, vi, grid, params)
    stiffly_accurate = (np.array_equal(tab.AE[-1, :-1], tab.bE[:-1]) and tab.bE[-1] == 0
                        and np.array_equal(tab.AI[-1], tab.bI))
    weights = tab.AE[-1] if stiffly_accurate else tab.bE
    dZ = dt * sum(weights[j] * Zts[j] for j in range(s) if weights[j] != 0)
    if stiffly_accurate:
        v1 = vi
    else:
        v1 = v0.copy()
        for j in range(s):
            if tab.bE[j] != 0:
                v1 += dt * tab.bE[j] * Es[j]
            if tab.bI[j] != 0:
                v1 += dt * tab.bI[j] * Is[j]
    Z1, Z1_lo = _accumulate(Z0, state.Z_lo, dZ)
    return state.replace(t=state.t + dt, Z=Z1, v=v1, Z_lo=Z1_lo)


def _accumulate(Z, Z_lo, dZ):
    """Compensated update ``Z + Z_lo + dZ`` split into a double and its error.

    Fast2Sum is exact here because ``|Z| >= |dZ + Z_lo|`` inside the validity
    band. Without it the rounding of ``Z`` near 1 makes the mass drift
    by a random walk of a few ulps per thousand steps.
    """
    inc = dZ if Z_lo is None else dZ + Z_lo
    total = Z + inc
    return total, inc - (total - Z)


def _explicit_rk2_step(state: State, config: StepConfig) -> State:
    dt = config.dt
    Zt1, vt1 = full_rhs(state)
    Zmid = state.Z + dt * Zt1
    _check_positive(Zmid, state.t)
    mid = state.replace(t=state.t + dt, Z=Zmid, v=state.v + dt * vt1)
    Zt2, vt2 = full_rhs(mid)
    Z1, Z1_lo = _accumulate(state.Z, state.Z_lo, 0.5 * dt * (Zt1 + Zt2))
    return state.replace(t=state.t + dt, Z=Z1, v=state.v + 0.5 * dt * (vt1 + vt2), Z_lo=Z1_lo)


def step(state: State, config: StepConfig) -> State:
    """Advance by ``config.dt``; raises :class:`ValidityBandError` if ``Z`` leaves ``(1/2, 2)``."""
    if config.scheme is Scheme.EXPLICIT_RK2:
        new = _explicit_rk2_step(state, config)
    else:
        new = _imex_step(state, config)
    new.check_band()
    return new


def trajectory(state: State, config: StepConfig, n_steps: int):
    """Yield ``state`` followed by ``n_steps`` successive steps."""
    yield state
    for _ in range(n_steps):
        state = step(state, config)
        yield state


def n_steps_for(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if not math.isclose(n * dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return n


# ---------------------------------------------------------------------------
# time-step selection


# The implicit midpoint stage sends stiff viscous modes to amplification -1, so
# the explicit gravity coupling destabilizes them well before the oscillator
# limit. Measured onset: omega_max * dt ~ 0.22 to 0.5 over gamma, mu, lambda.
_GRAVITY_FACTOR = {Scheme.IMEX_MIDPOINT: 0.2}


def dt_bounds(state: State, config: StepConfig) -> dict:
    """Stability bounds before the safety factor; ``inf`` when a bound is inactive."""
    grid, p = state.grid, state.params
    out = {}
    vmax = float(np.max(np.abs(state.v))) if state.v.size else 0.0
    out["advective"] = grid.h_min / vmax if vmax > 0 else math.inf
    W = vertical_velocity(state.Z, state.v, grid)
    wmax = float(np.max(np.abs(W)))
    out["vertical"] = grid.dz / wmax if wmax > 0 else math.inf
    # surface gravity waves: Z_tt ~ g Z / (alpha+1) lap Z, top wavenumber pi / h
    c = math.sqrt(p.g * float(np.max(state.Z)) / (p.alpha + 1))
    out["gravity"] = _GRAVITY_FACTOR.get(config.scheme, 1.0) * grid.h_min / (math.pi * c) \
        if np.any(state.Z != 1) or vmax > 0 else math.inf
    if config.scheme is Scheme.EXPLICIT_RK2:
        kmax2 = float(np.max(grid.kx ** 2) + np.max(grid.ky ** 2))
        zmin, zmax = float(np.min(state.Z)), float(np.max(state.Z))
        mmin = float(np.min(grid.mass_weights))
        if p.variant is Variant.CONSERVATIVE:
            stiff = ((2 * p.mu + abs(p.lam)) * kmax2 + 4 * p.mu / grid.dz ** 2) * zmax \
                / (mmin * zmin ** (p.alpha + 1))
        else:
            stiff = p.mu * (kmax2 + 4 / grid.dz ** 2) / (mmin * zmin ** p.alpha)
        out["viscous"] = 2.0 / stiff
    else:
        out["viscous"] = math.inf
    return out


def suggest_dt(state: State, config: StepConfig) -> float:
    """Largest step allowed by :func:`dt_bounds` times ``cfl_safety``, capped at ``config.dt``."""
    bound = min(dt_bounds(state, config).values())
    return min(config.dt, config.cfl_safety * bound)
