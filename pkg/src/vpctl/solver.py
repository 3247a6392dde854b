"""Semi-Lagrangian Vlasov-Poisson stepping, forward and adjoint.

Forward (Strang): half-step free streaming in x, full velocity kick by
``E[f1] + H[f1 - fbar]``, half-step free streaming. Backward: the adjoint
mirror of the same splitting with the source ``-dt * delta_f`` inserted
between two half kicks, using the midpoint state ``(f^n + f^{n-1}) / 2``.
Departure values come from (bi)linear interpolation, periodic in x; the
velocity axes are extended by zero ghost nodes one spacing past each end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .controllers import Controller, ZeroController
from .diagnostics import DiagnosticSeries, field_energy, l2_perturbation
from .equilibria import EquilibriumSpec, equilibrium, equilibrium_dv
from .grid import DTYPE, PhaseGrid, integrate_v, total_mass
from .poisson import electric_field

log = logging.getLogger(__name__)


class NumericalBlowup(RuntimeError):
    def __init__(self, step: int, diagnostics: DiagnosticSeries | None = None):
        super().__init__(f"non-finite or exploding distribution at step {step}")
        self.step = step
        self.diagnostics = diagnostics


@dataclass
class SolverConfig:
    dt: float = 0.2
    t_end: float = 70.0
    store_trajectory: bool = False
    record_every: int = 1
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class TrajectoryBuffer:
    states: np.ndarray    # (N + 1, *grid.shape)
    fields: np.ndarray    # (N, *spatial)  E used in each step
    controls: np.ndarray  # (N, *spatial)  H used in each step
    dt: float

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1


# -- interpolation ------------------------------------------------------------

def shift_axis(values: np.ndarray, axis: int, displacement, spacing: float,
               periodic: bool) -> np.ndarray:
    """Sample ``values`` at ``node - displacement`` along one axis by linear interpolation.

    ``displacement`` broadcasts against ``values`` and must be constant along
    ``axis``. Non-periodic axes read zero ghost values one spacing beyond
    either end (and zero further out).
    """
    n = values.shape[axis]
    shape = [1] * values.ndim
    shape[axis] = n
    idx = np.arange(n).reshape(shape)
    pos = idx - np.asarray(displacement, dtype=DTYPE) / spacing
    if periodic:
        i0 = np.floor(pos)
        w = pos - i0
        i0 = i0.astype(np.intp) % n
        i1 = (i0 + 1) % n
        lo = np.take_along_axis(values, i0, axis=axis)
        hi = np.take_along_axis(values, i1, axis=axis)
        return lo + w * (hi - lo)
    # zero ghost nodes at index -1 and n: a continuous zero extension
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    padded = np.pad(values, pad)
    pos = np.clip(pos, -1.0, float(n)) + 1.0
    i0 = np.minimum(np.floor(pos), n).astype(np.intp)
    w = pos - i0
    lo = np.take_along_axis(padded, i0, axis=axis)
    hi = np.take_along_axis(padded, i0 + 1, axis=axis)
    return lo + w * (hi - lo)


def _roll_shift(values, axis, line_axis, cells):
    """Periodic linear shift along ``axis`` by ``cells[j]`` for each index j of ``line_axis``.

    Same arithmetic as :func:`shift_axis`, looping over the axis the
    displacement depends on so each slice is a pair of rolls.
    """
    out = np.empty_like(values)
    n = values.shape[axis]
    src = np.moveaxis(values, line_axis, 0)
    dst = np.moveaxis(out, line_axis, 0)
    ax = axis - 1 if axis > line_axis else axis
    for j, s in enumerate(cells):
        pos0 = -float(s)
        i0 = np.floor(pos0)
        w = pos0 - i0
        k = int(i0) % n
        lo = np.roll(src[j], -k, axis=ax)
        hi = np.roll(src[j], -(k + 1), axis=ax)
        dst[j] = lo + w * (hi - lo)
    return out


def interp_bilinear(grid: PhaseGrid, f: np.ndarray, *query) -> np.ndarray:
    """Multilinear interpolation of ``f`` at arbitrary phase-space points.

    ``query`` holds one coordinate array per axis ``(x, v)`` or
    ``(x, y, v1, v2)``; they broadcast together. Spatial coordinates wrap
    periodically; velocity coordinates ramp linearly to zero over one
    spacing beyond the box and are zero further out.
    """
    f = np.asarray(f, dtype=DTYPE)
    if len(query) != f.ndim:
        raise ValueError(f"expected {f.ndim} coordinate arrays, got {len(query)}")
    query = np.broadcast_arrays(*[np.asarray(q, dtype=DTYPE) for q in query])
    corners_idx, corners_w = [], []
    inside = np.ones(query[0].shape, dtype=bool)
    for axis, q in enumerate(query):
        n = f.shape[axis]
        if axis < grid.dim:
            pos = (q - grid.x_bounds[0]) / grid.dx
            i0 = np.floor(pos)
            w = pos - i0
            i0 = i0.astype(np.intp) % n
            corners_idx.append((i0, (i0 + 1) % n))
        else:
            pos = (q - grid.v_bounds[0]) / grid.dv
            inside &= (pos > -1) & (pos < n)
            pos = np.clip(pos, -1.0, float(n)) + 1.0
            i0 = np.minimum(np.floor(pos), n).astype(np.intp)
            w = pos - i0
            corners_idx.append((i0, i0 + 1))
        corners_w.append((1.0 - w, w))
    pad = [(0, 0)] * grid.dim + [(1, 1)] * grid.dim
    f = np.pad(f, pad)
    out = np.zeros(query[0].shape, dtype=DTYPE)
    for corner in np.ndindex(*(2,) * f.ndim):
        idx = tuple(corners_idx[a][c] for a, c in enumerate(corner))
        wt = np.prod([corners_w[a][c] for a, c in enumerate(corner)], axis=0)
        out += wt * f[idx]
    out[~inside] = 0.0
    return out[()] if out.ndim == 0 else out


# -- system ---------------------------------------------------------------------

class VlasovPoisson:
    """Controlled Vlasov-Poisson system around a fixed equilibrium.

    The neutralising background is the discrete density of ``fbar`` (not the
    literal constant 1), so that ``fbar`` is an exact fixed point of the
    discrete scheme and ``E[f]`` equals the field of ``f - fbar``.
    """

    def __init__(self, grid: PhaseGrid, spec: EquilibriumSpec, bc: str | None = None):
        self.grid, self.spec = grid, spec
        self.bc = bc or ("dirichlet" if grid.dim == 1 else "periodic")
        if grid.dim == 2 and self.bc != "periodic":
            raise ValueError("2D runs use periodic boundaries")
        self.fbar = equilibrium(spec, grid)
        self.fbar_dv = equilibrium_dv(spec, grid)
        self.rho_background = integrate_v(grid, self.fbar)
        vel = grid.mesh()[grid.dim:]
        self._vel = vel

    # fields ------------------------------------------------------------------
    def efield(self, f: np.ndarray) -> np.ndarray:
        return electric_field(self.grid, integrate_v(self.grid, f) - self.rho_background, self.bc)

    def _stream(self, f, tau):
        """Free streaming ``f(x - tau v, v)``."""
        g = self.grid
        if g.dim == 1:
            return shift_axis(f, 0, tau * self._vel[0], g.dx, periodic=True)
        for a in range(2):
            f = _roll_shift(f, a, 2 + a, tau * g.v / g.dx)
        return f

    def _kick(self, f, accel, tau):
        """Velocity shift ``f(x, v - tau a(x))``."""
        g = self.grid
        if g.dim == 1:
            return shift_axis(f, 1, tau * accel[:, None], g.dv, periodic=False)
        for c in range(2):
            f = shift_axis(f, 2 + c, tau * accel[c][:, :, None, None], g.dv, periodic=False)
        return f

    def _check(self, f, step, threshold, series=None):
        if not np.all(np.isfinite(f)) or np.max(np.abs(f)) > threshold:
            raise NumericalBlowup(step, series)

    # forward -------------------------------------------------------------------
    def forward_step(self, f: np.ndarray, controller: Controller, dt: float,
                     step: int = 0, threshold: float = 1e6):
        """One Strang step; returns ``(f_next, E_used, H_used)``."""
        f1 = self._stream(f, 0.5 * dt)
        efield = self.efield(f1)
        hfield = controller(f1 - self.fbar)
        accel = efield + hfield
        if not np.all(np.isfinite(accel)):
            raise NumericalBlowup(step)
        f2 = self._kick(f1, accel, dt)
        f_next = self._stream(f2, 0.5 * dt)
        self._check(f_next, step, threshold)
        return f_next, efield, hfield

    def record(self, series: DiagnosticSeries, t: float, f: np.ndarray, controller: Controller):
        g = self.grid
        df = f - self.fbar
        law = getattr(controller, "inner", controller)
        series.append(
            t,
            l2_perturbation(g, f, self.fbar),
            field_energy(g, self.efield(f)),
            field_energy(g, law(df)),
            total_mass(g, f),
        )

    def run_forward(self, f0: np.ndarray, controller: Controller | None = None,
                    cfg: SolverConfig | None = None, on_step=None):
        """Integrate to ``cfg.t_end``; returns ``(trajectory or None, DiagnosticSeries)``.

        ``on_step(n, t, f)`` (optional) is called on the initial state and
        after every step.
        """
        cfg = cfg or SolverConfig()
        controller = controller or ZeroController(self.grid)
        f = self.grid.check(f0).copy()
        series = DiagnosticSeries()
        self.record(series, 0.0, f, controller)
        states, fields, controls = [f], [], []
        if on_step is not None:
            on_step(0, 0.0, f)
        for n in range(cfg.n_steps):
            try:
                f, efield, hfield = self.forward_step(f, controller, cfg.dt, n + 1, cfg.blowup_threshold)
            except NumericalBlowup as exc:
                exc.diagnostics = series
                log.warning("blowup at step %d (t=%.3f)", n + 1, (n + 1) * cfg.dt)
                raise
            if on_step is not None:
                on_step(n + 1, (n + 1) * cfg.dt, f)
            if cfg.store_trajectory:
                states.append(f)
                fields.append(efield)
                controls.append(hfield)
            if (n + 1) % cfg.record_every == 0 or n + 1 == cfg.n_steps:
                self.record(series, (n + 1) * cfg.dt, f, controller)
        traj = None
        if cfg.store_trajectory:
            spatial = np.shape(self.efield(f))
            traj = TrajectoryBuffer(
                np.stack(states),
                np.stack(fields) if fields else np.zeros((0,) + spatial),
                np.stack(controls) if controls else np.zeros((0,) + spatial),
                cfg.dt,
            )
        return traj, series

    def final_state(self, f0, controller, t_end, dt):
        """Integrate without storing anything and return ``f(t_end)``."""
        f = self.grid.check(f0).copy()
        for n in range(int(round(t_end / dt))):
            f, _, _ = self.forward_step(f, controller, dt, n + 1)
        return f

    # adjoint -------------------------------------------------------------------
    def adjoint_step_backward(self, lam: np.ndarray, f_n: np.ndarray, f_prev: np.ndarray,
                              controller: Controller, dt: float, step: int = 0,
                              threshold: float = 1e6) -> np.ndarray:
        f_half = 0.5 * (f_n + f_prev)
        df_half = f_half - self.fbar
        accel = self.efield(f_half) + controller(df_half)
        if not np.all(np.isfinite(accel)):
            raise NumericalBlowup(step)
        lam = self._stream(lam, -0.5 * dt)
        lam = self._kick(lam, accel, -0.5 * dt)
        lam = lam - dt * df_half
        lam = self._kick(lam, accel, -0.5 * dt)
        lam = self._stream(lam, -0.5 * dt)
        self._check(lam, step, threshold)
        return lam

    def run_adjoint(self, traj: TrajectoryBuffer | None, controller: Controller) -> np.ndarray:
        """Sweep from ``lambda^N = 0`` back to ``lambda^0``; returns all ``N + 1`` levels."""
        if traj is None:
            raise ValueError("the adjoint sweep needs a stored forward trajectory")
        n_steps = traj.n_steps
        lams = np.zeros_like(traj.states)
        for n in range(n_steps, 0, -1):
            lams[n - 1] = self.adjoint_step_backward(
                lams[n], traj.states[n], traj.states[n - 1], controller, traj.dt, n
            )
        return lams
