import math
from types import SimpleNamespace

import numpy as np
import pytest

from vpctl.controllers import LowRankController, TimeIndependentController, make_controller, trig_basis31
from vpctl.equilibria import EquilibriumSpec, PerturbationSpec, initial_condition
from vpctl.grid import PhaseGrid, ddv
from vpctl.nn import mlp_backward_params, mlp_init
from vpctl.solver import NumericalBlowup, SolverConfig, TrajectoryBuffer, VlasovPoisson
from vpctl.training import (
    TrainConfig,
    Trainer,
    TrainRecord,
    assemble_gradient,
    future_loss,
    running_loss,
)


def _randomized_low_rank(grid, seed=0):
    p = mlp_init(seed)
    r = np.random.default_rng(seed + 1)
    p.weights[-1][:] = 0.05 * r.standard_normal(p.weights[-1].shape)
    return LowRankController(grid, p)


def test_running_loss_trivial(small_grid):
    fbar = np.full(small_grid.shape, 0.3)
    states = np.stack([fbar, fbar, fbar])
    assert running_loss(small_grid, states, fbar, 0.2) == 0.0


def test_running_loss_constant(grid):
    c, dt = 0.01, 0.2
    fbar = grid.zeros()
    states = np.stack([fbar + c, fbar + 5.0])  # the final level is excluded
    expected = 0.5 * c**2 * 10 * np.pi * 16 * dt
    assert running_loss(grid, states, fbar, dt) == pytest.approx(expected, rel=1e-13)


def test_running_loss_non_negative(small_grid, rng):
    states = rng.standard_normal((4,) + small_grid.shape)
    assert running_loss(small_grid, states, small_grid.zeros(), 0.1) >= 0


def _constant_buffers(grid, c, s, L, dt):
    """One-step buffers with delta_f = c, d_v f = s, lambda = L everywhere."""
    _, v = grid.mesh()
    f0 = np.broadcast_to(s * v, grid.shape).copy()
    system = SimpleNamespace(grid=grid, fbar=f0 - c)
    traj = TrajectoryBuffer(np.stack([f0, f0]), np.zeros((1, grid.nx)), np.zeros((1, grid.nx)), dt)
    lams = np.full((2,) + grid.shape, L)
    return system, traj, lams


def test_gradient_zero_adjoint(small_grid, rng):
    system, traj, lams = _constant_buffers(small_grid, 0.1, 0.5, 0.0, 0.2)
    for ctrl in (TimeIndependentController(small_grid), _randomized_low_rank(small_grid)):
        assert np.all(assemble_gradient(system, traj, lams, ctrl) == 0)


def test_gradient_closed_form_time_independent(grid):
    c, s, L, dt = 0.01, 0.7, -1.3, 0.2
    system, traj, lams = _constant_buffers(grid, c, s, L, dt)
    grad = assemble_gradient(system, traj, lams, TimeIndependentController(grid))
    # only the constant (cos 0) mode survives the x-integral
    expected = np.zeros(31)
    expected[15] = dt * L * s * 16 * 10 * np.pi
    np.testing.assert_allclose(grad, expected, rtol=1e-10, atol=1e-10 * abs(expected[15]))


def test_gradient_closed_form_low_rank(grid):
    c, s, L, dt = 0.01, 0.7, -1.3, 0.2
    system, traj, lams = _constant_buffers(grid, c, s, L, dt)
    ctrl = _randomized_low_rank(grid, 2)
    grad = assemble_gradient(system, traj, lams, ctrl)
    out_bias = grad[-31:]
    # product of four closed-form integrals: v-moment of lambda d_v f, x-mean of the
    # constant basis row, and the phase-space integral of delta_f
    expected = dt * (L * s * 16) * (10 * np.pi) * c * (160 * np.pi)
    assert out_bias[0] == pytest.approx(expected, rel=1e-10)
    np.testing.assert_allclose(out_bias[1:], 0.0, atol=1e-10 * abs(expected))


def test_gradient_buffer_mismatch(small_grid):
    system, traj, lams = _constant_buffers(small_grid, 0.1, 0.5, 1.0, 0.2)
    with pytest.raises(ValueError, match="aligned"):
        assemble_gradient(system, traj, lams[:1], TimeIndependentController(small_grid))
    with pytest.raises(TypeError):
        assemble_gradient(system, traj, lams, make_controller("zero", small_grid))


def brute_force_low_rank_gradient(system, traj, lams, ctrl):
    """Triple sum with the network gradient evaluated point by point."""
    g = system.grid
    phi = trig_basis31(g)
    w = g.v_weights
    params = ctrl.params
    total = np.zeros(params.size)
    for n in range(traj.n_steps):
        df = traj.states[n] - system.fbar
        dfv = ddv(g, traj.states[n])
        for i in range(g.nx):
            outer = traj.dt * g.dx * (lams[n, i] * dfv[i] * w).sum()
            for l in range(g.nx):
                for m in range(g.nv):
                    cot = outer * phi[:, i] * df[l, m] * g.dx * w[m]
                    total += mlp_backward_params(params, ctrl.inputs[l * g.nv + m], cot).to_vector()
    return total


def test_low_rank_contraction_matches_brute_force():
    g = PhaseGrid(nx=8, nv=12)
    system = VlasovPoisson(g, EquilibriumSpec("two_stream_1d"))
    ctrl = _randomized_low_rank(g, 4)
    f0 = initial_condition("two_stream_default", g, eps=0.05)
    traj, _ = system.run_forward(f0, ctrl, SolverConfig(dt=0.2, t_end=0.6, store_trajectory=True))
    lams = system.run_adjoint(traj, ctrl)
    fast = assemble_gradient(system, traj, lams, ctrl)
    slow = brute_force_low_rank_gradient(system, traj, lams, ctrl)
    assert np.linalg.norm(fast - slow) <= 1e-10 * np.linalg.norm(slow)


def test_time_independent_gradient_direction():
    # approximate gradient vs central differences on a handful of coefficients
    cfg = TrainConfig(controller="time_independent", grid=PhaseGrid(nx=32, nv=64), horizon=2.0,
                      iterations=0, adagrad_steps=0)
    tr = Trainer(cfg)
    _, grad = tr.loss_and_gradient(tr.f0)
    h, fd = 1e-4, []
    for k in (0, 1, 15, 16, 17):
        e = np.zeros(31)
        e[k] = h
        tr.controller.set_parameters(e)
        jp = tr.loss(tr.f0)
        tr.controller.set_parameters(-e)
        jm = tr.loss(tr.f0)
        fd.append((jp - jm) / (2 * h))
    sub = grad[[0, 1, 15, 16, 17]]
    cos = sub @ fd / (np.linalg.norm(sub) * np.linalg.norm(fd))
    assert cos > 0.95


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(controller="cancellation")
    with pytest.raises(ValueError):
        TrainConfig(horizon=0.0)
    with pytest.raises(ValueError):
        TrainConfig(iterations=10, adagrad_steps=11)
    with pytest.raises(ValueError):
        TrainConfig(eval_every=0)


def _tiny(controller="low_rank_operator", **kw):
    opts = dict(controller=controller, grid=PhaseGrid(nx=16, nv=24), horizon=2.0, iterations=4,
                adagrad_steps=2, eval_every=2, perturbation=PerturbationSpec(rng_seed=1))
    opts.update(kw)
    return TrainConfig(**opts)


def test_zero_iterations_returns_initial_controller():
    tr = Trainer(_tiny(iterations=0, adagrad_steps=0))
    uncontrolled = future_loss(tr.system, tr.f0, make_controller("zero", tr.cfg.grid), 4.0, 0.2)
    best, record = tr.train()
    assert np.all(best == mlp_init(0).to_vector())
    assert record.eval_iterations == [0]
    assert record.best_future_loss == uncontrolled


def test_zero_init_matches_uncontrolled_bitwise():
    tr = Trainer(_tiny())
    cfg = SolverConfig(dt=0.2, t_end=2.0, store_trajectory=True)
    a, _ = tr.system.run_forward(tr.f0, tr.controller, cfg)
    b, _ = tr.system.run_forward(tr.f0, make_controller("zero", tr.cfg.grid), cfg)
    np.testing.assert_array_equal(a.states, b.states)


@pytest.mark.parametrize("kind", ["low_rank_operator", "time_independent"])
def test_train_record_consistency(kind):
    best, record = Trainer(_tiny(kind)).train()
    assert len(record.running_loss) == 4 and not any(record.skipped)
    assert record.eval_iterations == [0, 2, 4]
    assert record.best_future_loss == min(record.future_loss)
    assert record.best_future_loss <= record.future_loss[0]
    assert record.best_parameters is best


def test_train_deterministic():
    a, ra = Trainer(_tiny()).train()
    b, rb = Trainer(_tiny()).train()
    np.testing.assert_array_equal(a, b)
    assert ra.running_loss == rb.running_loss


def test_skipped_iterations_leave_parameters(monkeypatch):
    tr = Trainer(_tiny())
    theta0 = tr.controller.parameters

    def boom(f_init):
        raise NumericalBlowup(3)

    monkeypatch.setattr(tr, "loss_and_gradient", boom)
    best, record = tr.train()
    assert record.skipped == [True] * 4
    assert all(math.isnan(x) for x in record.running_loss)
    np.testing.assert_array_equal(best, theta0)


def test_future_loss_blowup_is_infinite(small_grid, two_stream):
    system = VlasovPoisson(small_grid, two_stream)
    assert future_loss(system, system.fbar * 1e7, make_controller("zero", small_grid), 0.4, 0.2) == math.inf


def test_train_record_csv(tmp_path):
    rec = TrainRecord(running_loss=[1.5, math.nan, 0.25], skipped=[False, True, False],
                      eval_iterations=[0, 3], future_loss=[2.0, 1.0], best_iteration=3)
    text = rec.write_csv(tmp_path / "r.csv").read_text().splitlines()
    assert text == ["iteration,running_loss,future_loss,skipped",
                    "0,1.5,2.0,0", "1,,,1", "2,0.25,,0", "3,,1.0,0"]
    assert rec.best_future_loss == 1.0
