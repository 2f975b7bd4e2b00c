"""Gaussian-process dynamical-system smoothing by expectation propagation.

The package splits into a small stack of layers:

- :mod:`gpds_ep.gaussians`: Gaussian/natural-parameter algebra with exact
  scale bookkeeping.
- :mod:`gpds_ep.gp`: per-output-dimension GP regression with squared
  exponential kernels and marginal-likelihood fitting.
- :mod:`gpds_ep.uncertain`: GP predictions through Gaussian input
  distributions, by exact moment matching or linearization.
- :mod:`gpds_ep.ep`: the iterative message-passing smoother; one iteration
  is a forward and a reverse sweep, single-sweep smoothers are the special
  case ``max_iters=1``.
- :mod:`gpds_ep.baselines`: exact Kalman/RTS smoothing and the extended
  Kalman smoother, used as oracles and comparison methods.
- :mod:`gpds_ep.systems`, :mod:`gpds_ep.experiment`, :mod:`gpds_ep.cli`:
  benchmark systems, the experiment harness and its command line.
"""

from .backend import BACKEND_NAME, available_backends
from .baselines import (LinearGaussianModel, ParametricModel, eks_smooth,
                        kalman_rts)
from .ep import (EPDiagnostics, EPOptions, MessageBank, backward_grads,
                 ep_smooth, measurement_grads)
from .errors import (CholeskyFailure, ConfigError, DimensionMismatch,
                     DivergenceError, GPDSError, NonFinite,
                     NonPositiveDefinite, SensorCoincidence, UpdateSkipped)
from .experiment import ExperimentConfig, run_experiment
from .gaussians import Gaussian, NaturalGaussian, divide, multiply
from .gp import GPDSModel, GPHyper, TrainedGP, fit_hyperparameters, train
from .metrics import mae_x, nll_x, nll_z
from .systems import (Trajectory, pendulum_model, simulate_pendulum,
                      simulate_sine, sine_model)
from .uncertain import (PredictMethod, UncertainPrediction, predict,
                        predict_linearized, predict_moment_matched,
                        predict_monte_carlo)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME", "CholeskyFailure", "ConfigError", "DimensionMismatch",
    "DivergenceError", "EPDiagnostics", "EPOptions", "ExperimentConfig",
    "GPDSError", "GPDSModel", "GPHyper", "Gaussian", "LinearGaussianModel",
    "MessageBank", "NaturalGaussian", "NonFinite", "NonPositiveDefinite",
    "ParametricModel", "PredictMethod", "SensorCoincidence", "TrainedGP",
    "Trajectory", "UncertainPrediction", "UpdateSkipped",
    "available_backends", "backward_grads", "divide", "eks_smooth",
    "ep_smooth", "fit_hyperparameters", "kalman_rts", "mae_x",
    "measurement_grads", "multiply", "nll_x", "nll_z", "pendulum_model",
    "predict", "predict_linearized", "predict_moment_matched",
    "predict_monte_carlo", "run_experiment", "simulate_pendulum",
    "simulate_sine", "sine_model", "train",
]
