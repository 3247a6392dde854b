"""Feedback control of Vlasov-Poisson plasma instabilities.

Semi-Lagrangian 1D1V / 2D2V solver with pluggable external-field
controllers, adjoint-state training and a config-driven experiment runner.
"""

from .controllers import (
    CancellationController,
    CancellationRatioController,
    LowRankController,
    NoisyFeedback,
    TimeIndependentController,
    ZeroController,
    make_controller,
)
from .diagnostics import DiagnosticSeries, checkpoint_read, checkpoint_write
from .equilibria import EquilibriumSpec, PerturbationSpec, equilibrium, initial_condition
from .experiments import ConfigError, resolve_config, run_experiment
from .grid import PhaseGrid
from .solver import NumericalBlowup, SolverConfig, VlasovPoisson
from .training import TrainConfig, Trainer, train

__version__ = "0.1.0"
