"""Adjoint-state training of time-independent and low-rank feedback controllers.

Each iteration perturbs the initial data with a random ``f_p``, runs the
controlled system forward over ``[0, T]``, sweeps the adjoint backward and
assembles the frozen-state gradient

    grad J ~ sum_n dt sum_{x,v} (grad_theta H)[delta f^n](x) lambda^n d_v f^n w,

then takes an Adagrad step (first ``adagrad_steps`` iterations) or an Adam
step. Every ``eval_every`` iterations the noise-free future loss
``||f(2T) - fbar||`` is recorded and the best parameters are kept.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import LowRankController, TimeIndependentController, make_controller
from .equilibria import (
    PRESET_EQUILIBRIA,
    EquilibriumSpec,
    PerturbationSpec,
    initial_condition,
    sample_training_perturbation,
)
from .grid import PhaseGrid, ddv, inner, integrate_v, l2_norm
from .nn import Optimizer, mlp_backward_params
from .solver import NumericalBlowup, SolverConfig, TrajectoryBuffer, VlasovPoisson

log = logging.getLogger(__name__)

TRAINABLE = ("time_independent", "low_rank_operator")


def running_loss(grid: PhaseGrid, states: np.ndarray, fbar: np.ndarray, dt: float) -> float:
    """``0.5 * sum_{n < N} ||f^n - fbar||^2 dt`` (left-endpoint rule)."""
    total = 0.0
    for f in states[:-1]:
        d = f - fbar
        total += inner(grid, d, d)
    return 0.5 * total * dt


def _adjoint_weighted_moments(grid, traj, lams):
    """``g^n(x) = sum_j lambda^n d_v f^n w_j`` for n = 0..N-1, shape (N, nx)."""
    return np.stack([
        integrate_v(grid, lams[n] * ddv(grid, traj.states[n])) for n in range(traj.n_steps)
    ]) if traj.n_steps else np.zeros((0, grid.nx))


def assemble_gradient(system: VlasovPoisson, traj: TrajectoryBuffer, lams: np.ndarray,
                      controller) -> np.ndarray:
    """Frozen-state adjoint gradient with respect to the controller parameters."""
    grid = system.grid
    if len(lams) != len(traj.states) or lams.shape[1:] != traj.states.shape[1:]:
        raise ValueError("adjoint and trajectory buffers are not aligned")
    g = _adjoint_weighted_moments(grid, traj, lams)
    dt, dx = traj.dt, grid.dx
    if isinstance(controller, TimeIndependentController):
        return dt * dx * controller.basis @ g.sum(axis=0)
    if isinstance(controller, LowRankController):
        a = dx * g @ controller.basis.T                    # (N, 31)
        df = traj.states[:-1] - system.fbar                 # (N, nx, nv)
        cot = dt * np.tensordot(a, df, axes=(0, 0))         # (31, nx, nv)
        cot = cot * grid.quadrature_weights
        cot = cot.reshape(cot.shape[0], -1).T               # (nx*nv, 31)
        return mlp_backward_params(controller.params, controller.inputs, cot).to_vector()
    raise TypeError(f"no gradient for controller kind {controller.kind!r}")


@dataclass
class TrainConfig:
    controller: str = "low_rank_operator"
    preset: str = "two_stream_default"
    grid: PhaseGrid = field(default_factory=PhaseGrid)
    dt: float = 0.2
    horizon: float = 30.0
    iterations: int = 3000
    adagrad_steps: int = 200
    lr_adagrad: float = 5e-3
    lr_adam: float = 5e-4
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    eval_every: int = 10
    seed: int = 0
    bc: str = "dirichlet"
    equilibrium: EquilibriumSpec | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.controller not in TRAINABLE:
            raise ValueError(f"cannot train controller kind {self.controller!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.adagrad_steps <= max(self.iterations, 0):
            raise ValueError("adagrad_steps must lie in [0, iterations]")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class TrainRecord:
    running_loss: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    eval_iterations: list = field(default_factory=list)
    future_loss: list = field(default_factory=list)
    best_iteration: int = 0
    best_parameters: np.ndarray | None = None

    @property
    def best_future_loss(self) -> float:
        return self.future_loss[self.eval_iterations.index(self.best_iteration)]

    def write_csv(self, path) -> Path:
        path = Path(path)
        evals = dict(zip(self.eval_iterations, self.future_loss))
        n_rows = max(len(self.running_loss), max(self.eval_iterations, default=-1) + 1)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "running_loss", "future_loss", "skipped"])
            for it in range(n_rows):
                loss = self.running_loss[it] if it < len(self.running_loss) else math.nan
                skipped = int(self.skipped[it]) if it < len(self.skipped) else 0
                fut = evals.get(it)
                w.writerow([
                    it,
                    "" if math.isnan(loss) else repr(loss),
                    "" if fut is None else repr(fut),
                    skipped,
                ])
        return path


def future_loss(system: VlasovPoisson, f0: np.ndarray, controller, t_end: float, dt: float) -> float:
    """``||f(t_end) - fbar||_2`` of a noise-free closed-loop run."""
    try:
        f = system.final_state(f0, controller, t_end, dt)
    except NumericalBlowup:
        return math.inf
    return l2_norm(system.grid, f - system.fbar)


class Trainer:
    """Holds the system, controller and optimizer state for one training run."""

    def __init__(self, cfg: TrainConfig, controller=None):
        self.cfg = cfg
        grid = cfg.grid
        self.spec = cfg.equilibrium or EquilibriumSpec(PRESET_EQUILIBRIA[cfg.preset])
        self.system = VlasovPoisson(grid, self.spec, cfg.bc)
        self.f0 = initial_condition(cfg.preset, grid, eps=cfg.eps, spec=self.spec)
        self.controller = controller or make_controller(cfg.controller, grid, self.spec, seed=cfg.seed)
        self.rng = np.random.default_rng(cfg.perturbation.rng_seed)
        self.solver_cfg = SolverConfig(dt=cfg.dt, t_end=cfg.horizon, store_trajectory=True,
                                       record_every=max(1, int(round(cfg.horizon / cfg.dt))))

    def loss_and_gradient(self, f_init: np.ndarray):
        traj, _ = self.system.run_forward(f_init, self.controller, self.solver_cfg)
        loss = running_loss(self.system.grid, traj.states, self.system.fbar, traj.dt)
        lams = self.system.run_adjoint(traj, self.controller)
        return loss, assemble_gradient(self.system, traj, lams, self.controller)

    def loss(self, f_init: np.ndarray) -> float:
        traj, _ = self.system.run_forward(f_init, self.controller, self.solver_cfg)
        return running_loss(self.system.grid, traj.states, self.system.fbar, traj.dt)

    def evaluate(self) -> float:
        return future_loss(self.system, self.f0, self.controller, 2 * self.cfg.horizon, self.cfg.dt)

    def train(self, callback=None):
        cfg, ctrl = self.cfg, self.controller
        record = TrainRecord()
        theta = ctrl.parameters
        opt = Optimizer("adagrad", cfg.lr_adagrad)

        def evaluate(it):
            loss = self.evaluate()
            record.eval_iterations.append(it)
            record.future_loss.append(loss)
            if record.best_parameters is None or loss < record.best_future_loss:
                record.best_iteration = it
                record.best_parameters = theta.copy()
            log.info("iteration %d: future loss %.6e", it, loss)

        for it in range(cfg.iterations):
            if it == cfg.adagrad_steps:
                opt = Optimizer("adam", cfg.lr_adam)
            if it % cfg.eval_every == 0:
                evaluate(it)
            f_init = self.f0 + sample_training_perturbation(cfg.perturbation, cfg.grid, self.rng)
            try:
                loss, grad = self.loss_and_gradient(f_init)
            except NumericalBlowup as exc:
                log.warning("iteration %d skipped: %s", it, exc)
                record.running_loss.append(math.nan)
                record.skipped.append(True)
                continue
            record.running_loss.append(loss)
            record.skipped.append(False)
            theta = opt.step(theta, grad)
            ctrl.set_parameters(theta)
            if callback is not None:
                callback(it, loss)
        evaluate(cfg.iterations)
        ctrl.set_parameters(record.best_parameters)
        return record.best_parameters, record


def train(cfg: TrainConfig, controller=None):
    """Run the full protocol; returns ``(best_parameters, TrainRecord)``."""
    return Trainer(cfg, controller).train()
