"""Frequency-domain boundary-value problem for one Laplace node.

For a node ``z`` and a frozen diffusion field ``a(x)`` we solve

    z U - u0 = a (U'' + U') + kappa U'

on a truncated uniform grid with second-order central differences and
Dirichlet data ``U(x_min) = 0``, ``U(x_max) = frequency_boundary(z, ...)``.
The resulting system is tridiagonal and is eliminated in one forward and
one backward sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bsm import DIFFUSION_FLOOR, frequency_boundary
from .exceptions import InvalidArgument, NumericalBreakdown

__all__ = [
    "SpatialGrid",
    "GridFunction",
    "FrequencySolution",
    "thomas",
    "stencil",
    "is_diagonally_dominant",
    "solve_frequency",
    "solve_frequency_linear",
    "discrete_residual",
]


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float = -6.0
    x_max: float = 6.0
    N: int = 1199

    def __post_init__(self):
        if not (self.x_min < 0 < self.x_max):
            raise InvalidArgument(
                f"grid must straddle x=0, got [{self.x_min}, {self.x_max}]"
            )
        if int(self.N) != self.N or self.N < 3:
            raise InvalidArgument(f"N must be an integer >= 3, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        """All ``N + 2`` node coordinates, boundaries included."""
        return np.linspace(self.x_min, self.x_max, self.N + 2)

    def refined(self, factor: int = 2) -> "SpatialGrid":
        """Same domain with the spacing divided by ``factor``."""
        return SpatialGrid(self.x_min, self.x_max, factor * (self.N + 1) - 1)


@dataclass
class GridFunction:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N + 2,):
            raise InvalidArgument(
                f"expected {self.grid.N + 2} values, got shape {self.values.shape}"
            )

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass
class FrequencySolution:
    z: float
    values: GridFunction
    boundary: tuple[float, float] = field(default=(0.0, 0.0))


@njit(cache=True, nogil=True)
def _thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    out = np.empty(n)
    piv = diag[0]
    if not (abs(piv) > 1e-300) or not np.isfinite(piv):
        return out, 0
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for j in range(1, n):
        piv = diag[j] - lower[j] * cp[j - 1]
        if not (abs(piv) > 1e-300) or not np.isfinite(piv):
            return out, j
        cp[j] = upper[j] / piv
        dp[j] = (rhs[j] - lower[j] * dp[j - 1]) / piv
    out[n - 1] = dp[n - 1]
    for j in range(n - 2, -1, -1):
        out[j] = dp[j] - cp[j] * out[j + 1]
    return out, -1


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system without pivoting.

    ``lower[0]`` and ``upper[-1]`` are ignored. Raises
    :class:`NumericalBreakdown` carrying the row index of a vanishing or
    non-finite pivot.
    """
    arrays = [np.ascontiguousarray(v, dtype=float) for v in (lower, diag, upper, rhs)]
    n = arrays[1].shape[0]
    if any(v.shape != (n,) for v in arrays):
        raise InvalidArgument("tridiagonal bands and rhs must share one length")
    out, bad = _thomas(*arrays)
    if bad >= 0:
        raise NumericalBreakdown(f"zero or non-finite pivot at row {bad}", index=bad)
    return out


def stencil(grid: SpatialGrid, z: float, a, kappa: float):
    """Interior bands ``(lower, diag, upper)`` of the discrete operator."""
    h = grid.h
    c = a / (h * h)
    d = (a + kappa) / (2.0 * h)
    return -(c - d), z + 2.0 * c, -(c + d)


def is_diagonally_dominant(grid: SpatialGrid, z: float, a, kappa: float):
    """Per-node test ``z h^2/a + 2 >= |1 - q| + |1 + q|``, ``q = h (1 + kappa/a) / 2``."""
    a = np.asarray(a, dtype=float)
    h = grid.h
    q = h * (1.0 + kappa / a) / 2.0
    return z * h * h / a + 2.0 >= np.abs(1.0 - q) + np.abs(1.0 + q)


def _values(obj):
    return obj.values if isinstance(obj, GridFunction) else np.asarray(obj, dtype=float)


def solve_frequency(
    grid: SpatialGrid,
    z: float,
    a_frozen,
    kappa: float,
    u0,
    *,
    tau0: float = 0.0,
    boundary=None,
    check_dominance: bool = False,
) -> FrequencySolution:
    """Solve the transformed problem at node ``z`` for a frozen coefficient.

    Parameters
    ----------
    grid : SpatialGrid
    z : float
        Laplace node, positive.
    a_frozen : GridFunction or array of length ``N + 2``
        Diffusion ratio evaluated at the frozen iterate; must be at least
        the diffusion floor everywhere.
    kappa : float
        Drift ``2 r / sigma^2``.
    u0 : GridFunction or array of length ``N + 2``
        Initial data of the current time level.
    tau0 : float
        Transformed time at which this level starts; shifts the far-field
        boundary value.
    boundary : (float, float), optional
        Explicit ``(left, right)`` Dirichlet values, replacing the
        option-pricing ones.
    check_dominance : bool
        Raise :class:`NumericalBreakdown` at the first node where the
        matrix is not diagonally dominant, before eliminating.
    """
    z = float(z)
    if not (z > 0 and math.isfinite(z)):
        raise InvalidArgument(f"z must be positive and finite, got {z}")
    a = _values(a_frozen)
    u0 = _values(u0)
    n = grid.N + 2
    if a.shape != (n,) or u0.shape != (n,):
        raise InvalidArgument(f"a_frozen and u0 must have {n} entries")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(u0))):
        raise InvalidArgument("a_frozen and u0 must be finite")
    if np.any(a < DIFFUSION_FLOOR):
        raise InvalidArgument(f"a_frozen must be >= {DIFFUSION_FLOOR}")

    if boundary is None:
        left, right = 0.0, frequency_boundary(z, kappa, grid.x_max, tau0)
    else:
        left, right = (float(b) for b in boundary)

    ai = a[1:-1]
    if check_dominance:
        ok = is_diagonally_dominant(grid, z, ai, kappa)
        if not ok.all():
            j = int(np.argmin(ok)) + 1
            raise NumericalBreakdown(
                f"matrix not diagonally dominant at node {j} (a={a[j]:.3g}, z={z:.3g})",
                index=j,
            )
    lower, diag, upper = stencil(grid, z, ai, kappa)
    rhs = u0[1:-1].copy()
    rhs[0] -= lower[0] * left
    rhs[-1] -= upper[-1] * right
    try:
        inner = thomas(lower, diag, upper, rhs)
    except NumericalBreakdown as exc:
        exc.index += 1
        raise NumericalBreakdown(
            f"elimination broke down at node {exc.index} (z={z:.6g})", index=exc.index
        ) from None

    U = np.empty(n)
    U[0] = left
    U[1:-1] = inner
    U[-1] = right
    return FrequencySolution(z=z, values=GridFunction(grid, U), boundary=(left, right))


def solve_frequency_linear(grid, z, kappa, u0, **kwargs) -> FrequencySolution:
    """Constant-volatility case, ``a = 1`` everywhere."""
    return solve_frequency(grid, z, np.ones(grid.N + 2), kappa, u0, **kwargs)


def discrete_residual(grid, z, a, kappa, u0, U) -> np.ndarray:
    """Interior residual of the stencil equation for a candidate ``U``."""
    a, u0, U = _values(a), _values(u0), _values(U)
    h = grid.h
    d2 = (U[2:] - 2.0 * U[1:-1] + U[:-2]) / (h * h)
    d1 = (U[2:] - U[:-2]) / (2.0 * h)
    return z * U[1:-1] - u0[1:-1] - a[1:-1] * (d2 + d1) - kappa * d1
