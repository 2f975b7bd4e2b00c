"""Per-time-step evaluation metrics for smoothed trajectories.

All three metrics average over time steps so runs of different length are
comparable. NLL values use the Gaussian marginals produced by a smoother;
lower is better throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .gaussians import Gaussian
from .linalg import wrap_to_pi


def _check_lengths(marginals, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if len(marginals) != arr.shape[0]:
        raise DimensionMismatch("marginal count does not match row count")
    return arr


def nll_x(marginals: list[Gaussian], X_true) -> float:
    """Mean negative log density of the true states under the smoothed
    state marginals."""
    X_true = _check_lengths(marginals, X_true)
    total = 0.0
    for g, x in zip(marginals, X_true):
        total -= g.log_pdf(x)
    return total / len(marginals)


def mae_x(marginals: list[Gaussian], X_true) -> float:
    """Mean absolute error of the posterior means, averaged over time
    steps and state dimensions."""
    X_true = _check_lengths(marginals, X_true)
    means = np.array([g.mean for g in marginals])
    return float(np.mean(np.abs(means - X_true)))


def nll_z(predictives: list[Gaussian], Z, wrap_dims=()) -> float:
    """Mean negative log density of the observations under the one-step
    observation predictives.

    Observation dims in ``wrap_dims`` are angles: each is relocated onto the
    2-pi branch nearest the predictive mean before scoring.
    """
    Z = _check_lengths(predictives, Z)
    total = 0.0
    for g, z in zip(predictives, Z):
        if wrap_dims:
            z = np.array(z, dtype=float)
            for d in wrap_dims:
                z[d] = g.mean[d] + wrap_to_pi(z[d] - g.mean[d])
        total -= g.log_pdf(z)
    return total / len(predictives)
