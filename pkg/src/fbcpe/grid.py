"""Discretization substrate: parameters, the periodic/vertical grid and its operators.

Horizontal directions live on the unit-measure torus ``[0, 1)^d`` and are
differentiated spectrally. The vertical direction ``z in (0, 1)`` is sampled
at cell centres ``z_k = (k + 1/2) / nz`` so the degenerate face ``z = 0`` is
never evaluated. Integrals against the weight ``z**alpha`` are computed
exactly for the piecewise-linear interpolant of the nodal values.

Array layout used throughout the package:

* surface fields (``Z``, ``Z_t``) have shape ``(nx, ny)``; ``ny == 1`` when
  ``dim_h == 1``;
* volume fields have shape ``(..., nz, nx, ny)``; velocities carry a leading
  component axis of length ``dim_h``.

The horizontal axes are always the last two, so spectral operators apply to
any field unchanged.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np


class Variant(enum.Enum):
    CONSERVATIVE = "conservative"
    NONCONSERVATIVE = "nonconservative"


@dataclasses.dataclass(frozen=True)
class Params:
    """Physical constants of the model.

    ``alpha = 1 / (gamma - 1)`` is derived, never set independently.
    """

    gamma: float = 2.0
    g: float = 1.0
    mu: float = 1.0
    lam: float = 1.0
    variant: Variant = Variant.CONSERVATIVE

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.mu + self.lam > 0.0:
            raise ValueError(f"mu + lambda must be positive, got {self.mu + self.lam}")
        if not self.g > 0.0:
            raise ValueError(f"g must be positive, got {self.g}")
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def alpha(self) -> float:
        return 1.0 / (self.gamma - 1.0)

    def replace(self, **changes) -> "Params":
        return dataclasses.replace(self, **changes)


def _segment_moments(a, b, alpha):
    """Exact integrals of xi**alpha and xi**(alpha+1) over [a, b]."""
    i0 = (b ** (alpha + 1) - a ** (alpha + 1)) / (alpha + 1)
    i1 = (b ** (alpha + 2) - a ** (alpha + 2)) / (alpha + 2)
    return i0, i1


def weighted_quadrature(nz: int, alpha: float):
    """Cumulative and full quadrature tables for the weight ``xi**alpha``.

    The nodal values are joined by their piecewise-linear interpolant, extended
    linearly over the two half cells next to the faces, and the weighted
    integral of that interpolant is evaluated in closed form.

    Returns
    -------
    z : ndarray, shape (nz,)
        Cell centres.
    cum : ndarray, shape (nz, nz)
        ``(cum @ f)[k]`` approximates the integral over ``[0, z_k]``. Row 0 has
        one entry right of the diagonal (the bottom half cell extrapolates from
        nodes 0 and 1).
    full : ndarray, shape (nz,)
        Weights for the integral over ``[0, 1]``; this is the cumulative row
        carried to ``z = 1``.
    """
    if nz < 2:
        raise ValueError(f"nz must be at least 2, got {nz}")
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    h = 1.0 / nz
    z = (np.arange(nz) + 0.5) * h

    # Each segment contributes to the two nodes defining its line.
    # Segments: [0, z_0] (line 0-1), [z_j, z_{j+1}], [z_{nz-1}, 1] (line nz-2, nz-1).
    def contrib(a, b, left, right):
        za, zb = z[left], z[right]
        i0, i1 = _segment_moments(a, b, alpha)
        w_left = (zb * i0 - i1) / (zb - za)
        w_right = (i1 - za * i0) / (zb - za)
        return w_left, w_right

    cum = np.zeros((nz, nz))
    wl, wr = contrib(0.0, z[0], 0, 1)
    running = np.zeros(nz)
    running[0] += wl
    running[1] += wr
    cum[0] = running
    for k in range(nz - 1):
        wl, wr = contrib(z[k], z[k + 1], k, k + 1)
        running[k] += wl
        running[k + 1] += wr
        cum[k + 1] = running
    wl, wr = contrib(z[-1], 1.0, nz - 2, nz - 1)
    full = running.copy()
    full[nz - 2] += wl
    full[nz - 1] += wr
    return z, cum, full


@dataclasses.dataclass(frozen=True, eq=False)
class Grid:
    """Periodic horizontal grid times a cell-centred vertical grid.

    All tables are read-only after construction.
    """

    dim_h: int
    nx: int
    ny: int
    nz: int
    alpha: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    kx: np.ndarray  # angular wavenumbers on the transform layout, Nyquist zeroed
    ky: np.ndarray
    quad_full: np.ndarray
    quad_cum: np.ndarray
    dealias: bool = False

    @property
    def dz(self) -> float:
        return 1.0 / self.nz

    @property
    def hshape(self) -> tuple:
        return (self.nx, self.ny)

    @property
    def vshape(self) -> tuple:
        return (self.nz, self.nx, self.ny)

    @property
    def mass_weights(self) -> np.ndarray:
        """Per-cell stand-in for ``z**alpha`` consistent with ``quad_full``.

        ``quad_full[k] / dz`` equals ``z_k**alpha`` up to O(dz**2); the solver
        divides by this so its kinetic energy uses the same table as every
        diagnostic.
        """
        return self.quad_full / self.dz

    @property
    def h_min(self) -> float:
        if self.dim_h == 1:
            return 1.0 / self.nx
        return min(1.0 / self.nx, 1.0 / self.ny)

    def mesh(self):
        """Horizontal coordinate arrays of shape ``(nx, ny)``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def laplacian_symbol(self) -> np.ndarray:
        """``-(kx**2 + ky**2)`` on the transform layout, consistent with D @ D."""
        return -(self.kx[:, None] ** 2 + self.ky[None, :] ** 2)


def build_grid(dim_h: int, nx: int, ny: int | None, nz: int, alpha: float,
               dealias: bool = False) -> Grid:
    """Construct a :class:`Grid`.

    ``ny`` is ignored (forced to 1) when ``dim_h == 1``.
    """
    if dim_h not in (1, 2):
        raise ValueError(f"dim_h must be 1 or 2, got {dim_h}")
    if nz < 2:
        raise ValueError(f"nz must be at least 2, got {nz}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if dim_h == 1:
        ny = 1
    if ny is None or ny < 1 or nx < 1:
        raise ValueError("nx and ny must be positive")
    for n in (nx,) + ((ny,) if dim_h == 2 else ()):
        if n < 4 or n & (n - 1):
            raise ValueError(f"horizontal node counts must be powers of two >= 4, got {n}")

    z, cum, full = weighted_quadrature(nz, alpha)
    # the top of the cumulative table *is* the full weight vector
    full.setflags(write=False)
    cum.setflags(write=False)

    # 1D grids use a real transform along x; 2D grids a real transform along y
    # (last axis) and a full one along x. Nyquist symbols are zeroed so the
    # derivative matrices are exactly skew-symmetric.
    if dim_h == 1:
        kx = 2 * np.pi * np.fft.rfftfreq(nx, d=1.0 / nx)
        kx[-1] = 0.0
        ky = np.zeros(1)
    else:
        kx = 2 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx)
        kx[nx // 2] = 0.0
        ky = 2 * np.pi * np.fft.rfftfreq(ny, d=1.0 / ny)
        ky[-1] = 0.0
    for arr in (kx, ky):
        arr.setflags(write=False)

    x = np.arange(nx) / nx
    y = np.arange(ny) / ny
    return Grid(dim_h=dim_h, nx=nx, ny=ny, nz=nz, alpha=float(alpha), x=x, y=y,
                z=z, kx=kx, ky=ky, quad_full=full, quad_cum=cum, dealias=dealias)


# ---------------------------------------------------------------------------
# horizontal (spectral) calculus


def spec_fwd(f, grid):
    """Forward real transform over the horizontal axes (the last two)."""
    if grid.dim_h == 1:
        return np.fft.rfft(f, axis=-2)
    return np.fft.rfft2(f, axes=(-2, -1))


def spec_inv(fh, grid):
    """Inverse of :func:`spec_fwd`."""
    if grid.dim_h == 1:
        return np.fft.irfft(fh, n=grid.nx, axis=-2)
    return np.fft.irfft2(fh, s=grid.hshape, axes=(-2, -1))


def _spectral(f, grid, symbol):
    return spec_inv(spec_fwd(f, grid) * symbol, grid)


def horiz_deriv(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Spectral derivative along horizontal ``axis`` (0 = x, 1 = y).

    Works on any field whose last two axes are horizontal.
    """
    if axis == 0:
        symbol = 1j * grid.kx[:, None] * np.ones_like(grid.ky)[None, :]
    elif axis == 1:
        symbol = 1j * np.ones_like(grid.kx)[:, None] * grid.ky[None, :]
    else:
        raise ValueError("axis must be 0 or 1")
    return _spectral(f, grid, symbol)


def grad_h(f, grid):
    """Horizontal gradient; a new leading axis of length ``dim_h``."""
    return np.stack([horiz_deriv(f, grid, a) for a in range(grid.dim_h)])


def div_h(v, grid):
    """Horizontal divergence of a vector field with leading component axis."""
    out = horiz_deriv(v[0], grid, 0)
    for a in range(1, grid.dim_h):
        out = out + horiz_deriv(v[a], grid, a)
    return out


def laplacian_h(f, grid):
    return _spectral(f, grid, grid.laplacian_symbol())


def dealias_filter(f, grid):
    """Two-thirds truncation of the horizontal spectrum."""
    kmax_x = (2.0 / 3.0) * np.pi * grid.nx
    keep = (np.abs(grid.kx)[:, None] < kmax_x) & np.ones(grid.ky.shape, bool)[None, :]
    if grid.dim_h == 2:
        keep = keep & (np.abs(grid.ky)[None, :] < (2.0 / 3.0) * np.pi * grid.ny)
    return _spectral(f, grid, keep.astype(float))


def mean_h(f):
    """Integral over the unit torus (uniform weights), pairwise summation."""
    return np.mean(f, axis=(-2, -1)) if f.ndim >= 2 else np.mean(f)


# ---------------------------------------------------------------------------
# vertical operators (vertical axis is -3)


def vertical_avg_weighted(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``int_0^1 z**alpha f dz`` per horizontal node."""
    return np.einsum("...kij,k->...ij", f, grid.quad_full)


def cumulative_weighted(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``int_0^{z_k} xi**alpha f dxi`` at every cell centre."""
    return np.einsum("...jxy,kj->...kxy", f, grid.quad_cum)


def zcol(a: np.ndarray) -> np.ndarray:
    """Reshape a length-nz profile to broadcast against ``(nz, nx, ny)``."""
    return np.asarray(a)[:, None, None]


def vertical_integral(f, grid):
    """Unweighted ``int_0^1 f dz`` (midpoint rule on the cells)."""
    return f.sum(axis=-3) * grid.dz


def _mirror(f):
    return np.concatenate([f[..., :1, :, :], f, f[..., -1:, :, :]], axis=-3)


def dz_center(f, grid):
    """Centred first difference with mirror ghosts (``d_z f = 0`` at faces)."""
    fe = _mirror(f)
    return (fe[..., 2:, :, :] - fe[..., :-2, :, :]) / (2 * grid.dz)


def dzz(f, grid):
    """Second difference with mirror ghosts."""
    fe = _mirror(f)
    return (fe[..., 2:, :, :] - 2 * f + fe[..., :-2, :, :]) / grid.dz ** 2


def dz_faces(f, grid):
    """Differences on the ``nz - 1`` interior faces."""
    return np.diff(f, axis=-3) / grid.dz
