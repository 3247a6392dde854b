"""Phase-space grids and the quadrature / difference helpers shared by the solvers.

Distribution functions are plain float64 arrays laid out as ``(nx, nv)`` in
1D1V and ``(nx, nx, nv, nv)`` in 2D2V (spatial axes first). Spatial fields
are ``(nx,)`` in 1D and ``(nx, nx)`` per component in 2D; vector fields in
2D carry a leading component axis of length 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform tensor grid: periodic space, closed velocity axes.

    Spatial axes hold ``nx`` cells with the point ``x_max`` identified with
    ``x_min``; velocity axes hold ``nv`` points including both endpoints.
    The same interval is used on every spatial (resp. velocity) axis.
    """

    dim: int = 1
    nx: int = 100
    nv: int = 200
    x_bounds: tuple[float, float] = (0.0, 10.0 * np.pi)
    v_bounds: tuple[float, float] = (-8.0, 8.0)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 4 or self.nv < 4:
            raise ValueError(f"need nx >= 4 and nv >= 4, got nx={self.nx}, nv={self.nv}")
        x0, x1 = map(float, self.x_bounds)
        v0, v1 = map(float, self.v_bounds)
        if not (x1 > x0 and v1 > v0):
            raise ValueError("grid bounds must be increasing intervals")
        object.__setattr__(self, "x_bounds", (x0, x1))
        object.__setattr__(self, "v_bounds", (v0, v1))

    @property
    def length(self) -> float:
        return self.x_bounds[1] - self.x_bounds[0]

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def dv(self) -> float:
        return (self.v_bounds[1] - self.v_bounds[0]) / (self.nv - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_bounds[0] + self.dx * np.arange(self.nx, dtype=DTYPE)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(*self.v_bounds, self.nv, dtype=DTYPE)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.dim + (self.nv,) * self.dim

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.dim

    @property
    def v_weights(self) -> np.ndarray:
        """Trapezoid weights along one velocity axis."""
        w = np.full(self.nv, self.dv, dtype=DTYPE)
        w[0] = w[-1] = 0.5 * self.dv
        return w

    @property
    def velocity_weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights over all velocity axes."""
        if "vw" not in self._cache:
            w = self.v_weights
            self._cache["vw"] = w if self.dim == 1 else np.outer(w, w)
        return self._cache["vw"]

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def quadrature_weights(self) -> np.ndarray:
        """Full phase-space weights, broadcastable against a distribution."""
        return self.cell_volume * self.velocity_weights

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays ``(x, v)`` or ``(x, y, v1, v2)``."""
        axes = [self.x] * self.dim + [self.v] * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    def spatial_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.dim), indexing="ij", sparse=True))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=DTYPE)

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=DTYPE)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f


def integrate_v(grid: PhaseGrid, f: np.ndarray) -> np.ndarray:
    """Velocity moment ``rho(x) = sum_j f(x, v_j) w_j`` with trapezoid weights."""
    f = np.asarray(f, dtype=DTYPE)
    if grid.dim == 1:
        return f @ grid.v_weights
    return np.tensordot(f, grid.velocity_weights, axes=([-2, -1], [0, 1]))


def integrate_x(grid: PhaseGrid, g: np.ndarray) -> float:
    """Rectangle rule over the periodic spatial axes."""
    return float(np.sum(g) * grid.cell_volume)


def total_mass(grid: PhaseGrid, f: np.ndarray) -> float:
    return integrate_x(grid, integrate_v(grid, f))


def inner(grid: PhaseGrid, f: np.ndarray, g: np.ndarray) -> float:
    """Weighted phase-space L2 inner product."""
    return integrate_x(grid, integrate_v(grid, np.asarray(f) * np.asarray(g)))


def l2_norm(grid: PhaseGrid, f: np.ndarray) -> float:
    return float(np.sqrt(inner(grid, f, f)))


def ddv(grid: PhaseGrid, f: np.ndarray) -> np.ndarray:
    """Velocity derivative by second-order finite differences.

    Central differences in the interior, one-sided second-order stencils at
    the two velocity endpoints. In 2D the result stacks ``(d/dv1, d/dv2)``
    along a new leading axis.
    """
    f = np.asarray(f, dtype=DTYPE)
    if grid.dim == 1:
        return np.gradient(f, grid.dv, axis=-1, edge_order=2)
    return np.stack(
        [np.gradient(f, grid.dv, axis=a, edge_order=2) for a in (-2, -1)]
    )
