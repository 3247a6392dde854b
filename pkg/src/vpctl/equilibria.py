"""Target equilibria, perturbed initial data and the training perturbation sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DTYPE, PhaseGrid

_DEFAULTS = {
    "two_stream_1d": {"vbar": 2.4},
    "bump_on_tail_1d": {"w1": 0.9, "w2": 0.1, "vbar1": -2.0, "vbar2": 3.5, "vt": 0.25},
    "two_stream_2d": {"vbar": (2.0, 2.0)},
}

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EquilibriumSpec:
    """Spatially uniform Gaussian-mixture equilibrium ``fbar(v)``.

    ``vt`` in the bump-on-tail mixture is the variance of the bump, as in
    ``exp(-(v - vbar2)**2 / (2 vt))``.
    """

    kind: str = "two_stream_1d"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ValueError(f"unknown equilibrium kind {self.kind!r}; expected one of {sorted(_DEFAULTS)}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**_DEFAULTS[self.kind], **self.params}
        if self.kind == "bump_on_tail_1d":
            if merged["w1"] <= 0 or merged["w2"] <= 0:
                raise ValueError("mixture weights must be positive")
            if not math.isclose(merged["w1"] + merged["w2"], 1.0, rel_tol=1e-12):
                raise ValueError("bump-on-tail weights must sum to one")
            if merged["vt"] <= 0:
                raise ValueError("thermal spread vt must be positive")
        if self.kind == "two_stream_2d":
            merged["vbar"] = tuple(float(c) for c in merged["vbar"])
        object.__setattr__(self, "params", merged)

    @property
    def dim(self) -> int:
        return 2 if self.kind.endswith("2d") else 1


def _gauss(v, mean, var=1.0):
    return np.exp(-((v - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def profile(spec: EquilibriumSpec, *v):
    """Evaluate ``fbar`` at velocity coordinates (one array per velocity axis)."""
    p = spec.params
    if spec.kind == "two_stream_1d":
        (v,) = v
        return 0.5 * _gauss(v, p["vbar"]) + 0.5 * _gauss(v, -p["vbar"])
    if spec.kind == "bump_on_tail_1d":
        (v,) = v
        return p["w1"] * _gauss(v, p["vbar1"]) + p["w2"] * _gauss(v, p["vbar2"], p["vt"])
    v1, v2 = v
    a, b = p["vbar"]
    return (
        np.exp(-((v1 - a) ** 2 + (v2 - b) ** 2) / 2.0)
        + np.exp(-((v1 + a) ** 2 + (v2 + b) ** 2) / 2.0)
    ) / (4.0 * math.pi)


def profile_dv(spec: EquilibriumSpec, *v):
    """Closed-form velocity derivative of ``fbar`` (a pair of arrays in 2D)."""
    p = spec.params
    if spec.kind == "two_stream_1d":
        (v,) = v
        vb = p["vbar"]
        return -0.5 * (v - vb) * _gauss(v, vb) - 0.5 * (v + vb) * _gauss(v, -vb)
    if spec.kind == "bump_on_tail_1d":
        (v,) = v
        return (
            -p["w1"] * (v - p["vbar1"]) * _gauss(v, p["vbar1"])
            - p["w2"] * (v - p["vbar2"]) / p["vt"] * _gauss(v, p["vbar2"], p["vt"])
        )
    v1, v2 = v
    a, b = p["vbar"]
    g_plus = np.exp(-((v1 - a) ** 2 + (v2 - b) ** 2) / 2.0) / (4.0 * math.pi)
    g_minus = np.exp(-((v1 + a) ** 2 + (v2 + b) ** 2) / 2.0) / (4.0 * math.pi)
    return (
        -(v1 - a) * g_plus - (v1 + a) * g_minus,
        -(v2 - b) * g_plus - (v2 + b) * g_minus,
    )


def _check_dims(spec, grid):
    if spec.dim != grid.dim:
        raise ValueError(f"{spec.kind} needs a {spec.dim}D grid, got {grid.dim}D")


def equilibrium(spec: EquilibriumSpec, grid: PhaseGrid) -> np.ndarray:
    _check_dims(spec, grid)
    vel = grid.mesh()[grid.dim:]
    return np.broadcast_to(profile(spec, *vel), grid.shape).astype(DTYPE)


def equilibrium_dv(spec: EquilibriumSpec, grid: PhaseGrid) -> np.ndarray:
    """Analytic ``d fbar / dv`` on the grid; stacked per velocity axis in 2D."""
    _check_dims(spec, grid)
    vel = grid.mesh()[grid.dim:]
    d = profile_dv(spec, *vel)
    if grid.dim == 1:
        return np.broadcast_to(d, grid.shape).astype(DTYPE)
    return np.stack([np.broadcast_to(c, grid.shape) for c in d]).astype(DTYPE)


# -- initial data -----------------------------------------------------------

PRESET_EQUILIBRIA = {
    "two_stream_default": "two_stream_1d",
    "two_stream_alt": "two_stream_1d",
    "bump_on_tail_default": "bump_on_tail_1d",
    "two_stream_2d_default": "two_stream_2d",
}

PRESET_EPS = {
    "two_stream_default": 1e-3,
    "two_stream_alt": 1e-3,
    "bump_on_tail_default": 3e-3,
    "two_stream_2d_default": 1e-2,
}


def initial_condition(name: str, grid: PhaseGrid, eps: float | None = None,
                      spec: EquilibriumSpec | None = None) -> np.ndarray:
    """Perturbed initial distribution for one of the named presets.

    ``eps`` overrides the preset amplitude. For ``two_stream_alt`` it scales
    the profile ``1 - eps sin(x/5) + 2 eps cos(2x/5)``.
    """
    if name not in PRESET_EQUILIBRIA:
        raise ValueError(f"unknown initial condition {name!r}; expected one of {sorted(PRESET_EQUILIBRIA)}")
    spec = spec or EquilibriumSpec(PRESET_EQUILIBRIA[name])
    eps = PRESET_EPS[name] if eps is None else eps
    fbar = equilibrium(spec, grid)
    k = 2.0 * np.pi / grid.length  # 1/5 on [0, 10 pi]
    if name == "two_stream_default":
        x, _ = grid.mesh()
        return (1.0 + eps * np.cos(k * x)) * fbar
    if name == "two_stream_alt":
        x, _ = grid.mesh()
        return (1.0 - eps * np.sin(k * x) + 2.0 * eps * np.cos(2 * k * x)) * fbar
    if name == "bump_on_tail_default":
        x, v = grid.mesh()
        p = spec.params
        return fbar + eps * p["w2"] * _gauss(v, p["vbar2"], p["vt"]) * np.sin(k * x)
    x, y, _, _ = grid.mesh()
    return (1.0 + eps * np.sin(k * x) * np.cos(k * y)) * fbar


# -- training perturbations ---------------------------------------------------

def hermite_fn(n: int, v):
    """Orthonormal Hermite function ``He_n(v) exp(-v^2/4) / sqrt(sqrt(2 pi) n!)``."""
    if n < 0:
        raise ValueError("order must be non-negative")
    v = np.asarray(v, dtype=DTYPE)
    he_prev, he = np.zeros_like(v), np.ones_like(v)
    for m in range(n):
        he_prev, he = he, v * he - m * he_prev
    return he * np.exp(-(v**2) / 4.0) / math.sqrt(_SQRT_2PI * math.factorial(n))


def trig_basis_orthonormal(grid: PhaseGrid, k_modes: int) -> np.ndarray:
    """``k_modes`` orthonormal functions on the periodic interval: const, sin(l..), cos(l..)."""
    if k_modes < 1 or k_modes % 2 == 0:
        raise ValueError("k_modes must be odd (constant plus sine/cosine pairs)")
    m = (k_modes - 1) // 2
    L = grid.length
    x = grid.x - grid.x_bounds[0]
    l = np.arange(1, m + 1)[:, None]
    k = 2.0 * np.pi * l / L
    rows = [np.full((1, grid.nx), math.sqrt(1.0 / L))]
    rows.append(math.sqrt(2.0 / L) * np.sin(k * x))
    rows.append(math.sqrt(2.0 / L) * np.cos(k * x))
    return np.concatenate(rows)


@dataclass(frozen=True)
class PerturbationSpec:
    eps_p: float = 1e-3
    k_modes: int = 11
    n_modes: int = 6
    rng_seed: int = 0

    def __post_init__(self):
        if self.eps_p <= 0:
            raise ValueError("eps_p must be positive")
        if self.k_modes < 1 or self.n_modes < 1:
            raise ValueError("mode counts must be at least 1")


def sample_unit_ball(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Uniform sample from the closed unit ball in ``R^dim``."""
    g = rng.standard_normal(dim)
    return rng.uniform() ** (1.0 / dim) * g / np.linalg.norm(g)


def sample_training_perturbation(spec: PerturbationSpec, grid: PhaseGrid,
                                 rng: np.random.Generator) -> np.ndarray:
    """Random ``f_p = eps_p sum_kn w_kn phi_k(x) h_n(v)`` with ``w`` uniform in the unit ball."""
    if grid.dim != 1:
        raise ValueError("training perturbations are defined on 1D grids only")
    phi = trig_basis_orthonormal(grid, spec.k_modes)
    h = np.stack([hermite_fn(n, grid.v) for n in range(spec.n_modes)])
    omega = sample_unit_ball(rng, spec.k_modes * spec.n_modes).reshape(spec.k_modes, spec.n_modes)
    return spec.eps_p * phi.T @ omega @ h
