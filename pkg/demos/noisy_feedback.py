# %% [markdown]
# # Cancellation under noisy measurements
#
# The feedback sees ``delta f`` corrupted by Gaussian noise. Larger noise
# leaves a larger residual perturbation.

# %%
import numpy as np

from vpctl import (EquilibriumSpec, NoisyFeedback, PhaseGrid, SolverConfig, VlasovPoisson,
                   initial_condition, make_controller)

grid = PhaseGrid(nx=64, nv=96)
spec = EquilibriumSpec("two_stream_1d")
system = VlasovPoisson(grid, spec)
f0 = initial_condition("two_stream_default", grid)

# %%
for sigma in (0.0, 2e-5, 1e-4):
    ctrl = NoisyFeedback(make_controller("cancellation", grid, spec, gamma=1.0), sigma,
                         np.random.default_rng(0))
    _, series = system.run_forward(f0, ctrl, SolverConfig(dt=0.2, t_end=70.0))
    print(f"sigma={sigma:g}  final l2 {series.l2_perturbation[-1]:.3e}")
