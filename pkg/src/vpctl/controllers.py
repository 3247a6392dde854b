"""External-field laws ``H[delta_f]``.

Every controller is a callable mapping a perturbation ``delta_f`` (same layout
as the distribution) to a spatial field: ``(nx,)`` in 1D, ``(2, nx, nx)`` in 2D.
"""

from __future__ import annotations

import numpy as np

from .equilibria import EquilibriumSpec, equilibrium_dv
from .grid import DTYPE, PhaseGrid, integrate_v
from .nn import DEFAULT_LAYERS, MlpParams, mlp_forward, mlp_init
from .poisson import electric_field

KINDS = ("zero", "time_independent", "low_rank_operator", "cancellation", "cancellation_ratio")
N_TRIG = 31


def _spatial_zeros(grid):
    shape = grid.spatial_shape if grid.dim == 1 else (2,) + grid.spatial_shape
    return np.zeros(shape, dtype=DTYPE)


def time_independent_basis(grid: PhaseGrid) -> np.ndarray:
    """Rows ``sin(k x/5)`` for k = 1..15, then ``cos(k x/5)`` for k = 0..15."""
    k0 = 2.0 * np.pi / grid.length
    x = grid.x - grid.x_bounds[0]
    k = np.arange(1, 16)[:, None]
    kc = np.arange(0, 16)[:, None]
    return np.concatenate([np.sin(k0 * k * x), np.cos(k0 * kc * x)])


def trig_basis31(grid: PhaseGrid) -> np.ndarray:
    """Rows ``1``, ``sin(l x/5)`` for l = 1..15, then ``cos(l x/5)`` for l = 1..15."""
    k0 = 2.0 * np.pi / grid.length
    x = grid.x - grid.x_bounds[0]
    l = np.arange(1, 16)[:, None]
    return np.concatenate([np.ones((1, grid.nx)), np.sin(k0 * l * x), np.cos(k0 * l * x)])


def apply_time_independent(grid: PhaseGrid, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=DTYPE)
    if theta.shape != (N_TRIG,):
        raise ValueError(f"expected {N_TRIG} coefficients, got shape {theta.shape}")
    return theta @ time_independent_basis(grid)


class Controller:
    kind = "abstract"
    linear = True

    def __init__(self, grid: PhaseGrid):
        self.grid = grid

    def __call__(self, delta_f: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroController(Controller):
    kind = "zero"

    def __call__(self, delta_f):
        return _spatial_zeros(self.grid)


class TimeIndependentController(Controller):
    """Fixed trigonometric field; ignores the state (affine, not linear, in delta_f)."""

    kind = "time_independent"
    linear = False

    def __init__(self, grid: PhaseGrid, theta=None):
        if grid.dim != 1:
            raise ValueError("time-independent control is defined on 1D grids")
        super().__init__(grid)
        self.basis = time_independent_basis(grid)
        self.set_parameters(np.zeros(N_TRIG) if theta is None else theta)

    @property
    def parameters(self) -> np.ndarray:
        return self.theta.copy()

    def set_parameters(self, theta):
        self.theta = np.array(theta, dtype=DTYPE)
        if self.theta.shape != (N_TRIG,):
            raise ValueError(f"expected {N_TRIG} coefficients, got shape {self.theta.shape}")
        self._field = self.theta @ self.basis

    def __call__(self, delta_f):
        return self._field.copy()


def normalized_inputs(grid: PhaseGrid) -> np.ndarray:
    """Grid nodes mapped to ``[-1, 1]^2`` as ``(nx*nv, 2)`` network inputs."""
    xs = 2.0 * (grid.x - grid.x_bounds[0]) / grid.length - 1.0
    v0, v1 = grid.v_bounds
    vs = 2.0 * (grid.v - v0) / (v1 - v0) - 1.0
    X, V = np.meshgrid(xs, vs, indexing="ij")
    return np.column_stack([X.ravel(), V.ravel()])


class LowRankController(Controller):
    """``H(x_i) = sum_k phi_k(x_i) sum_{l,m} psi_k(x_l, v_m) delta_f(x_l, v_m) dx w_m``.

    The kernel table ``psi`` (31 x nx x nv) is cached; call :meth:`refresh`
    after changing the network parameters in place.
    """

    kind = "low_rank_operator"

    def __init__(self, grid: PhaseGrid, params: MlpParams | None = None, seed: int = 0):
        if grid.dim != 1:
            raise ValueError("the low-rank operator is defined on 1D grids")
        super().__init__(grid)
        self.params = params if params is not None else mlp_init(seed, DEFAULT_LAYERS)
        if self.params.layer_dims[-1] != N_TRIG or self.params.layer_dims[0] != 2:
            raise ValueError(f"network must map R^2 -> R^{N_TRIG}, got {self.params.layer_dims}")
        self.basis = trig_basis31(grid)
        self.inputs = normalized_inputs(grid)
        self.refresh()

    def refresh(self):
        psi = mlp_forward(self.params, self.inputs)  # (nx*nv, 31)
        self.psi = psi.T.reshape(N_TRIG, *self.grid.shape)
        weights = self.grid.quadrature_weights
        self._projection = (self.psi * weights).reshape(N_TRIG, -1)
        self._token = self.params.version

    @property
    def parameters(self) -> np.ndarray:
        return self.params.to_vector()

    def set_parameters(self, vec):
        self.params.set_vector(vec)
        self.refresh()

    def coefficients(self, delta_f) -> np.ndarray:
        if self._token != self.params.version:
            raise RuntimeError("kernel table is stale: parameters changed without refresh()")
        return self._projection @ np.asarray(delta_f, dtype=DTYPE).ravel()

    def __call__(self, delta_f):
        return self.coefficients(delta_f) @ self.basis

    def dense_matrix(self) -> np.ndarray:
        """The full ``nx x (nx*nv)`` feedback matrix (for checks on small grids)."""
        return self.basis.T @ self._projection


class CancellationController(Controller):
    """``H = -dE[delta_f] + gamma * int delta_f d(fbar)/dv dv``.

    ``dE`` is obtained from the same Poisson path the solver uses, so the
    first term removes the self-consistent field perturbation exactly.
    """

    kind = "cancellation"

    def __init__(self, grid: PhaseGrid, spec: EquilibriumSpec, gamma: float = 1.0,
                 bc: str = "dirichlet"):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        super().__init__(grid)
        self.spec, self.gamma, self.bc = spec, float(gamma), bc
        self.fbar_dv = equilibrium_dv(spec, grid)

    def field_perturbation(self, delta_f):
        return electric_field(self.grid, integrate_v(self.grid, delta_f), self.bc)

    def projection(self, delta_f):
        """``int delta_f d(fbar)/dv dv`` (one component per velocity axis)."""
        if self.grid.dim == 1:
            return integrate_v(self.grid, delta_f * self.fbar_dv)
        return np.stack([integrate_v(self.grid, delta_f * d) for d in self.fbar_dv])

    def __call__(self, delta_f):
        delta_f = np.asarray(delta_f, dtype=DTYPE)
        return -self.field_perturbation(delta_f) + self.gamma * self.projection(delta_f)


class CancellationRatioController(CancellationController):
    """Ratio variant: ``dH = gamma * int |delta_f|^2 dv / (int delta_f fbar' dv + eps)``.

    The bias carries the sign of the denominator; an exactly zero
    denominator takes ``+eps``.
    """

    kind = "cancellation_ratio"
    linear = False

    def __init__(self, grid, spec, gamma=1.0, eps_bias=1e-8, bc="dirichlet"):
        super().__init__(grid, spec, gamma, bc)
        if eps_bias == 0:
            raise ValueError("eps_bias must be nonzero")
        self.eps_bias = abs(float(eps_bias))

    def ratio_term(self, delta_f):
        num = integrate_v(self.grid, delta_f**2)
        den = self.projection(delta_f)
        bias = np.where(den < 0, -self.eps_bias, self.eps_bias)
        return self.gamma * num / (den + bias)

    def __call__(self, delta_f):
        delta_f = np.asarray(delta_f, dtype=DTYPE)
        return -self.field_perturbation(delta_f) + self.ratio_term(delta_f)


def add_feedback_noise(delta_f: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Corrupt the measured perturbation with i.i.d. ``sigma * N(0, 1)`` per node."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return delta_f
    return delta_f + sigma * rng.standard_normal(np.shape(delta_f))


class NoisyFeedback(Controller):
    """Feeds ``inner`` a freshly noise-corrupted ``delta_f`` on every call."""

    def __init__(self, inner: Controller, sigma: float, rng: np.random.Generator):
        super().__init__(inner.grid)
        self.inner, self.sigma, self.rng = inner, float(sigma), rng
        self.kind = inner.kind
        self.linear = False

    def __call__(self, delta_f):
        return self.inner(add_feedback_noise(delta_f, self.sigma, self.rng))


def make_controller(kind: str, grid: PhaseGrid, spec: EquilibriumSpec | None = None, *,
                    gamma: float = 1.0, eps_bias: float = 1e-8, bc: str = "dirichlet",
                    theta=None, params: MlpParams | None = None, seed: int = 0) -> Controller:
    if kind == "zero":
        return ZeroController(grid)
    if kind == "time_independent":
        return TimeIndependentController(grid, theta)
    if kind == "low_rank_operator":
        return LowRankController(grid, params, seed=seed)
    if kind == "cancellation":
        return CancellationController(grid, spec, gamma, bc)
    if kind == "cancellation_ratio":
        return CancellationRatioController(grid, spec, gamma, eps_bias, bc)
    raise ValueError(f"unknown controller kind {kind!r}; expected one of {KINDS}")
