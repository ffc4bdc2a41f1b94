"""Numerical checks of the weighted inequalities behind the stability theory.

No check asserts a particular constant. Each reports both sides, their
ratio, and a flag telling whether the numbers survived a refinement.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .diagnostics import relative_energy, total_energy
from .dynamics import full_rhs
from .grid import (Grid, dz_center, dzz, grad_h, mean_h, vertical_avg_weighted,
                   weighted_quadrature)

# ---------------------------------------------------------------------------
# one-dimensional weighted integrals toward a singular endpoint


@dataclasses.dataclass(frozen=True)
class Integral:
    value: float
    divergent: bool
    stable: bool


def _gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _panel(f, a, b, nodes):
    t, w = nodes
    s = a + (b - a) * t
    return (b - a) * float(np.sum(w * f(s)))


def integrate_to_zero(f: Callable, upper: float, lower: float = 0.0, n: int = 20,
                      max_levels: int = 60, rtol: float = 1e-15) -> Integral:
    """``int_lower^upper f`` with panels that shrink by 4 toward ``lower``.

    Panels ``[lower + h/4, lower + h]`` are added one by one. The integral is
    declared divergent when the running total at least doubles on two
    consecutive refinements, or when ``max_levels`` panels do not settle it.
    The ``stable`` flag compares ``n`` and ``2n`` Gauss nodes per panel.
    """

    def run(nodes):
        total = 0.0
        doublings = 0
        small = 0
        h = upper - lower
        for _ in range(max_levels):
            piece = _panel(f, lower + h / 4, lower + h, nodes)
            new_total = total + piece
            if total > 0 and new_total >= 2 * total:
                doublings += 1
                if doublings >= 2:
                    return new_total, True
            else:
                doublings = 0
            total = new_total
            h /= 4
            if abs(piece) <= rtol * abs(total) or (total == 0 and piece == 0):
                small += 1
                if small >= 2:
                    return total, False
            else:
                small = 0
        return total, True

    coarse, div1 = run(_gauss(n))
    fine, div2 = run(_gauss(2 * n))
    divergent = div1 or div2
    stable = (not divergent) and abs(fine - coarse) <= 1e-8 * max(abs(fine), 1e-300)
    return Integral(math.nan if divergent else fine, divergent, stable)


@dataclasses.dataclass(frozen=True)
class InequalityResult:
    """``(lhs, rhs, ratio)`` plus flags; iterating yields the three numbers."""

    lhs: float
    rhs: float
    ratio: float
    divergent: bool = False
    stable: bool = True
    detail: tuple = ()

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ratio))


def _ratio(lhs, rhs):
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        return math.nan
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


def _derivative(g, dg):
    if dg is not None:
        return dg

    def fd(s):
        h = 1e-6 * np.maximum(np.abs(s), 1e-12)
        return (g(s + h) - g(s - h)) / (2 * h)
    return fd


def _trace_at_zero(g, L):
    with np.errstate(all="ignore"):
        g0 = float(np.asarray(g(np.array([0.0])))[0])
    if math.isfinite(g0):
        return g0
    # g(0) not representable: use the value at a point far inside the first panel
    return float(np.asarray(g(np.array([L * 4.0 ** -30])), dtype=float)[0])


def check_hardy(g: Callable, k: float, L: float = 1.0, case: str = "a",
                dg: Callable | None = None, omega: float = 0.5,
                n: int = 20) -> InequalityResult:
    """Evaluate both sides of one of the three Hardy inequalities.

    ``g`` (and optionally its derivative ``dg``) must accept numpy arrays on
    ``(0, L]``. Cases:

    * ``"a"`` (``k > 1``): ``int s^(k-2) g^2`` against ``int s^k (g^2/L^2 + g'^2)``;
    * ``"b"`` (``k < 1``): ``int s^(k-2) (g - g(0))^2`` against ``int s^k g'^2``;
    * ``"c"`` (``k > 1``, ``0 < omega < 1``): the left side over ``(0, omega)``
      against ``omega^-2 int_0^omega s^k g^2 + omega^2 int_0^omega s^(k-2) g'^2``.

    A divergent side is reported through ``divergent`` with ``nan`` in place
    of its value.
    """
    case = case.lower()
    if case not in ("a", "b", "c"):
        raise ValueError(f"unknown Hardy case {case!r}")
    if case in ("a", "c") and not k > 1:
        raise ValueError(f"case {case} requires k > 1, got k={k}")
    if case == "b" and not k < 1:
        raise ValueError(f"case b requires k < 1, got k={k}")
    if not L > 0:
        raise ValueError("L must be positive")
    dg = _derivative(g, dg)

    if case == "a":
        lhs = integrate_to_zero(lambda s: s ** (k - 2) * g(s) ** 2, L, n=n)
        rhs = integrate_to_zero(lambda s: s ** k * (g(s) ** 2 / L ** 2 + dg(s) ** 2), L, n=n)
        parts = (rhs,)
    elif case == "b":
        g0 = _trace_at_zero(g, L)
        lhs = integrate_to_zero(lambda s: s ** (k - 2) * (g(s) - g0) ** 2, L, n=n)
        rhs = integrate_to_zero(lambda s: s ** k * dg(s) ** 2, L, n=n)
        parts = (rhs,)
    else:
        if not 0 < omega < 1:
            raise ValueError("omega must lie in (0, 1)")
        lhs = integrate_to_zero(lambda s: s ** (k - 2) * g(s) ** 2, omega, n=n)
        r1 = integrate_to_zero(lambda s: s ** k * g(s) ** 2, omega, n=n)
        r2 = integrate_to_zero(lambda s: s ** (k - 2) * dg(s) ** 2, omega, n=n)
        parts = (r1, r2)
        rhs_value = omega ** -2 * r1.value + omega ** 2 * r2.value
        rhs = Integral(rhs_value, r1.divergent or r2.divergent, r1.stable and r2.stable)
    divergent = lhs.divergent or rhs.divergent
    return InequalityResult(lhs.value, rhs.value, _ratio(lhs.value, rhs.value),
                            divergent=divergent, stable=lhs.stable and rhs.stable,
                            detail=tuple(p.value for p in parts))


# ---------------------------------------------------------------------------
# vertical Poincare-type inequality on model states


def refine_vertical(f: np.ndarray, grid: Grid, factor: int):
    """Cubic-spline resampling of cell-centred data onto ``nz * factor`` cells.

    The profile is mirrored across both faces first, which matches the
    homogeneous Neumann condition of the velocity.
    """
    nz = grid.nz
    z = grid.z
    ze = np.concatenate([-z[::-1], z, 2.0 - z[::-1]])
    fe = np.concatenate([f[..., ::-1, :, :], f, f[..., ::-1, :, :]], axis=-3)
    spline = CubicSpline(ze, fe, axis=-3)
    nf = nz * factor
    zf = (np.arange(nf) + 0.5) / nf
    return zf, spline(zf)


@dataclasses.dataclass(frozen=True, eq=False)
class _FineGrid:
    """Minimal stand-in for a vertical grid used by the difference helpers."""

    nz: int

    @property
    def dz(self):
        return 1.0 / self.nz


def _vertical_energy(v, grid, beta, factor):
    zf, vf = refine_vertical(v, grid, factor)
    fine = _FineGrid(zf.size)
    d1 = dz_center(vf, fine)
    d2 = dzz(vf, fine)
    d3 = dz_center(d2, fine)
    _, _, w = weighted_quadrature(zf.size, beta)
    dens = d1 ** 2 + d2 ** 2 + d3 ** 2
    col = np.einsum("...kxy,k->...xy", dens, w)
    return float(np.sum(mean_h(col)))


def _h2_sq(f, grid):
    g = grad_h(f, grid)
    h = np.stack([grad_h(g[j], grid) for j in range(grid.dim_h)])
    return float(mean_h(f * f) + np.sum(mean_h(g * g)) + np.sum(mean_h(h * h)))


def check_poincare(state, beta: float = 1.0, refine: int = 8) -> InequalityResult:
    """Both sides of the vertical Poincare-type inequality for ``state``.

    ``lhs = int z^a |v|^2``; ``detail`` holds the three right-hand terms
    ``(int z^beta (|v_z|^2 + |v_zz|^2 + |v_zzz|^2), |z^(a/2) grad_h v|^2,
    |z^(a/2) v|^2 |Z^(a+1) - 1|^2_{H^2})`` and ``rhs`` their sum. The third
    vertical derivative is taken by differencing on a grid refined ``refine``
    times; ``stable`` compares against ``2 * refine``.
    """
    grid, alpha = state.grid, state.params.alpha
    if not 0 < alpha < 3:
        raise ValueError(f"the Poincare check needs 0 < alpha < 3, got alpha={alpha:g}")
    if not 0 <= beta < 4 - alpha:
        raise ValueError(f"beta must satisfy 0 <= beta < 4 - alpha = {4 - alpha:g}, got {beta:g}")
    v, Z = state.v, state.Z
    lhs = float(np.sum(mean_h(vertical_avg_weighted(v * v, grid))))
    t1 = _vertical_energy(v, grid, beta, refine)
    t1_fine = _vertical_energy(v, grid, beta, 2 * refine)
    gv = grad_h(v, grid)
    t2 = float(np.sum(mean_h(vertical_avg_weighted(gv * gv, grid))))
    t3 = lhs * _h2_sq(Z ** (alpha + 1) - 1.0, grid)
    rhs = t1 + t2 + t3
    stable = abs(t1_fine - t1) <= 0.05 * max(abs(t1_fine), 1e-300)
    return InequalityResult(lhs, rhs, _ratio(lhs, rhs), stable=stable, detail=(t1, t2, t3))


# ---------------------------------------------------------------------------
# energy equivalence


@dataclasses.dataclass(frozen=True)
class EquivalenceResult:
    C: float
    ratios: tuple
    violations: tuple  # indices whose relative energy was not positive


def _energies(state):
    Zt, vt = full_rhs(state)
    return total_energy(state, vt, Zt), relative_energy(state, vt, Zt)


def worker_count() -> int:
    """Worker threads for batch sweeps, capped by ``CPE_THREADS`` (default 1)."""
    raw = os.environ.get("CPE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CPE_THREADS must be a positive integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map; each item is evaluated independently so the
    result does not depend on the worker count."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def check_energy_equivalence(states: Sequence, workers: int | None = None) -> EquivalenceResult:
    """Measured equivalence constant ``max(E / E_c, E_c / E)`` over a family.

    Members whose relative energy is not positive are listed as violations
    and left out of ``C``; members at exact equilibrium (both zero) are skipped.
    """
    pairs = parallel_map(_energies, list(states), workers)
    ratios = []
    violations = []
    for i, (E, Ec) in enumerate(pairs):
        if E == 0 and Ec == 0:
            ratios.append(math.nan)
            continue
        if not Ec > 0:
            violations.append(i)
            ratios.append(math.nan)
            continue
        ratios.append(max(E / Ec, Ec / E))
    finite = [r for r in ratios if math.isfinite(r)]
    C = max(finite) if finite else math.nan
    return EquivalenceResult(C, tuple(ratios), tuple(violations))


# ---------------------------------------------------------------------------
# batteries used by the CLI and the acceptance suite


@dataclasses.dataclass(frozen=True)
class BatteryRow:
    check: str
    label: str
    lhs: float
    rhs: float
    ratio: float
    measured_C: float
    status: str


def hardy_battery() -> list:
    """Closed-form Hardy examples, including one divergent right-hand side."""
    cases = [
        ("a: g=s k=2 L=1", dict(g=lambda s: s, dg=lambda s: np.ones_like(s), k=2.0, case="a")),
        ("a: g=1-s k=3 L=1", dict(g=lambda s: 1 - s, dg=lambda s: -np.ones_like(s), k=3.0, case="a")),
        ("b: g=const k=0.5", dict(g=lambda s: np.full_like(s, 2.0), dg=lambda s: np.zeros_like(s),
                                  k=0.5, case="b")),
        ("b: g=s k=0 L=1", dict(g=lambda s: s, dg=lambda s: np.ones_like(s), k=0.0, case="b")),
        ("b: g=s^(1/4) k=0", dict(g=lambda s: s ** 0.25, dg=lambda s: 0.25 * s ** -0.75,
                                  k=0.0, case="b")),
        ("c: g=s k=2 omega=1/2", dict(g=lambda s: s, dg=lambda s: np.ones_like(s), k=2.0,
                                      case="c", omega=0.5)),
    ]
    rows = []
    for label, kw in cases:
        res = check_hardy(**kw)
        status = "divergent" if res.divergent else ("ok" if res.stable else "unstable")
        rows.append(BatteryRow("hardy", label, res.lhs, res.rhs, res.ratio, math.nan, status))
    return rows


def zero_momentum_family(grid: Grid, params, n: int = 20, eps: float = 1e-3,
                         first_seed: int = 0) -> list:
    """``n`` random perturbations of the equilibrium projected to zero momentum."""
    from .state import perturbed_ic, project_zero_momentum
    return [project_zero_momentum(perturbed_ic(grid, params, eps, seed=first_seed + i))
            for i in range(n)]


def poincare_battery(grid: Grid, params, beta: float = 1.0, n: int = 20,
                     eps: float = 1e-3, workers: int | None = None) -> list:
    family = zero_momentum_family(grid, params, n, eps)
    results = parallel_map(lambda s: check_poincare(s, beta), family, workers)
    return [BatteryRow("poincare", f"seed={i}", r.lhs, r.rhs, r.ratio, math.nan,
                       "ok" if (math.isfinite(r.ratio) and r.stable) else "unstable")
            for i, r in enumerate(results)]


def equivalence_battery(grid: Grid, params, eps_values=(1e-4, 1e-3), n: int = 10,
                        workers: int | None = None) -> list:
    rows = []
    for eps in eps_values:
        family = zero_momentum_family(grid, params, n, eps)
        res = check_energy_equivalence(family, workers)
        status = "violation" if res.violations else "ok"
        rows.append(BatteryRow("equivalence", f"eps={eps:g}", math.nan, math.nan,
                               math.nan, res.C, status))
    return rows
