"""Poisson solves for the self-consistent electric field.

1D uses zero Dirichlet data for the potential at both ends of the periodic
interval (the point ``x_max`` is appended as a boundary node). 2D uses a
doubly periodic spectral solve with the mean mode projected out.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .grid import DTYPE, PhaseGrid

BOUNDARY_CONDITIONS = ("dirichlet", "periodic")


def greens_1d(x, y, a: float, b: float):
    """Green's function of ``-u'' = s`` on ``[a, b]`` with ``u(a) = u(b) = 0``."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    x = np.asarray(x, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    if np.any((x < a) | (x > b) | (y < a) | (y > b)):
        raise ValueError(f"arguments must lie in [{a}, {b}]")
    out = np.where(x <= y, (x - a) * (b - y), (y - a) * (b - x)) / (b - a)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=32)
def _dirichlet_band(n_interior: int, dx: float) -> np.ndarray:
    ab = np.empty((3, n_interior), dtype=DTYPE)
    ab[0, :] = -1.0 / dx**2
    ab[1, :] = 2.0 / dx**2
    ab[2, :] = -1.0 / dx**2
    ab[0, 0] = ab[2, -1] = 0.0
    ab.setflags(write=False)
    return ab


def dirichlet_matrix(grid: PhaseGrid) -> np.ndarray:
    """Dense form of the interior tridiagonal operator (test oracle and reference)."""
    n = grid.nx - 1
    return (
        2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    ) / grid.dx**2


def solve_field_1d(grid: PhaseGrid, source: np.ndarray, bc: str = "dirichlet"):
    """Solve ``-phi'' = source`` and return ``(phi, E)`` with ``E = -phi'``.

    With ``bc="dirichlet"`` the potential vanishes at ``x_min`` and at the
    (excluded) node ``x_max``; interior nodes come from the second-order
    tridiagonal system, and ``E`` from central differences with one-sided
    second-order stencils at the ends. ``bc="periodic"`` is a mean-free
    spectral solve kept for sensitivity checks.
    """
    source = np.asarray(source, dtype=DTYPE)
    if source.shape != (grid.nx,):
        raise ValueError(f"source shape {source.shape} != ({grid.nx},)")
    if bc == "periodic":
        return _solve_periodic_1d(grid, source)
    if bc != "dirichlet":
        raise ValueError(f"unknown boundary condition {bc!r}")

    phi = np.zeros(grid.nx + 1, dtype=DTYPE)
    phi[1:-1] = solve_banded((1, 1), _dirichlet_band(grid.nx - 1, grid.dx), source[1:],
                             check_finite=False)
    efield = -np.gradient(phi, grid.dx, edge_order=2)
    return phi[:-1], efield[:-1]


def _wavenumbers(grid: PhaseGrid) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)


def _derivative_symbol(grid: PhaseGrid) -> np.ndarray:
    k = _wavenumbers(grid)
    if grid.nx % 2 == 0:
        k[grid.nx // 2] = 0.0  # Nyquist mode has no odd derivative
    return 1j * k


def _solve_periodic_1d(grid, source):
    k = _wavenumbers(grid)
    s_hat = np.fft.fft(source)
    phi_hat = np.zeros_like(s_hat)
    phi_hat[1:] = s_hat[1:] / k[1:] ** 2
    phi = np.fft.ifft(phi_hat).real
    efield = np.fft.ifft(-_derivative_symbol(grid) * phi_hat).real
    return phi, efield


def solve_field_2d_periodic(grid: PhaseGrid, source: np.ndarray, return_potential: bool = False):
    """Spectral solve of ``-lap(phi) = source`` on the periodic square.

    The ``k = 0`` mode of ``phi`` is pinned to zero, so a nonzero source mean
    is silently projected out. Returns ``E = -grad(phi)`` with shape
    ``(2, nx, nx)`` (and ``phi`` when requested).
    """
    source = np.asarray(source, dtype=DTYPE)
    if source.shape != grid.spatial_shape or grid.dim != 2:
        raise ValueError(f"source shape {source.shape} incompatible with 2D grid {grid.spatial_shape}")
    k = _wavenumbers(grid)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    k2 = kx**2 + ky**2
    k2[0, 0] = 1.0
    phi_hat = np.fft.fft2(source) / k2
    phi_hat[0, 0] = 0.0
    dk = _derivative_symbol(grid)
    dkx, dky = np.meshgrid(dk, dk, indexing="ij")
    efield = np.stack(
        [np.fft.ifft2(-dkx * phi_hat).real, np.fft.ifft2(-dky * phi_hat).real]
    )
    if return_potential:
        return efield, np.fft.ifft2(phi_hat).real
    return efield


def spectral_divergence(grid: PhaseGrid, efield: np.ndarray) -> np.ndarray:
    """Spectral divergence of a periodic 2D vector field."""
    dk = _derivative_symbol(grid)
    dkx, dky = np.meshgrid(dk, dk, indexing="ij")
    return np.fft.ifft2(dkx * np.fft.fft2(efield[0]) + dky * np.fft.fft2(efield[1])).real


def electric_field(grid: PhaseGrid, source: np.ndarray, bc: str = "dirichlet") -> np.ndarray:
    """Field-only entry point used by the solver and the cancellation law."""
    if grid.dim == 1:
        return solve_field_1d(grid, source, bc)[1]
    return solve_field_2d_periodic(grid, source)
