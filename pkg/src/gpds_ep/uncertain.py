"""GP predictions under Gaussian input uncertainty.

Three routes produce the same :class:`UncertainPrediction` contract:

- moment matching: exact first and second moments of the GP output when the
  input is Gaussian (the expensive, accurate route),
- linearization: first-order expansion of the posterior mean at the input
  mean, with the model-plus-noise variance evaluated there,
- Monte Carlo: a seeded sampling oracle used for validation.

Every route reports the output covariance including observation noise, the
input-output cross-covariance C and the Jacobian-like matrix
J = C^T Sigma_in^-1, which all downstream smoother updates share.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backend
from .errors import DimensionMismatch, NonPositiveDefinite
from .gaussians import Gaussian
from .gp import TrainedGP, predict_points
from .linalg import chol, is_pd, symmetrize


class PredictMethod(Enum):
    MOMENT_MATCHING = "moment-matching"
    LINEARIZATION = "linearization"


@dataclass(frozen=True, eq=False)
class UncertainPrediction:
    """Joint Gaussian summary of input x and GP output f(x).

    out_cov includes observation noise.  cross_cov is cov[x, f(x)], shape
    (D, E); jacobian is C^T Sigma_in^-1, shape (E, D), and satisfies
    jacobian @ Sigma_in == cross_cov.T by construction.
    """

    out_mean: np.ndarray
    out_cov: np.ndarray
    cross_cov: np.ndarray
    jacobian: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.out_mean, dtype=float))
        c = symmetrize(np.asarray(self.out_cov, dtype=float))
        cc = np.asarray(self.cross_cov, dtype=float)
        j = np.asarray(self.jacobian, dtype=float)
        e = m.shape[0]
        if c.shape != (e, e) or cc.shape[1] != e or j.shape[0] != e \
                or j.shape[1] != cc.shape[0]:
            raise DimensionMismatch("inconsistent prediction shapes")
        object.__setattr__(self, "out_mean", m)
        object.__setattr__(self, "out_cov", c)
        object.__setattr__(self, "cross_cov", cc)
        object.__setattr__(self, "jacobian", j)


def _build_prediction(mean, cov, V, Sigma_in) -> UncertainPrediction:
    """Assemble from the premultiplied cross term V = Sigma^-1 C."""
    cross = Sigma_in @ V
    pred = UncertainPrediction(mean, cov, cross, V.T)
    # consistency required by every consumer: J Sigma_in = C^T
    gap = np.max(np.abs(pred.jacobian @ Sigma_in - pred.cross_cov.T)) \
        if cross.size else 0.0
    scale = 1.0 + np.max(np.abs(cross)) if cross.size else 1.0
    if gap > 1e-8 * scale:
        raise NonPositiveDefinite("cross-covariance / jacobian inconsistency")
    return pred


def _check_gp_input(gp: TrainedGP, mean: np.ndarray):
    if mean.shape[0] != gp.input_dim:
        raise DimensionMismatch(
            f"input dim {mean.shape[0]} != GP input dim {gp.input_dim}")


def moment_matched_core(gp: TrainedGP, mean: np.ndarray,
                        cov: np.ndarray) -> UncertainPrediction:
    """Moment matching for any PSD input covariance (controls allowed)."""
    _check_gp_input(gp, mean)
    nu = gp.X - mean
    m, c, V = backend.mm_core(nu, gp.inv_ell2, gp.log_sf2, gp.sw2,
                              gp.beta, gp.iK, cov)
    return _build_prediction(m, c, V, cov)


def linearized_core(gp: TrainedGP, mean: np.ndarray,
                    cov: np.ndarray) -> UncertainPrediction:
    """First-order propagation for any PSD input covariance."""
    _check_gp_input(gp, mean)
    E, D = gp.output_dim, gp.input_dim
    point_mean, point_var = predict_points(gp, mean[None, :])
    J = np.zeros((E, D))
    nu = gp.X - mean
    for a in range(E):
        # d r_a / d mu has rows r_a_i * Lambda_a^-1 (x_i - mu)
        r = gp.sf2[a] * np.exp(
            -0.5 * np.einsum("nd,nd->n", nu, nu * gp.inv_ell2[a]))
        J[a] = (gp.beta[a] * r) @ (nu * gp.inv_ell2[a])
    out_cov = J @ cov @ J.T + np.diag(point_var[0])
    V = J.T  # premultiplied cross term: C = Sigma V, so V = J^T here
    return _build_prediction(point_mean[0], out_cov, V, cov)


def predict_moment_matched(gp: TrainedGP, inp: Gaussian) -> UncertainPrediction:
    """Exact output moments under a proper Gaussian input."""
    chol(inp.cov, "input covariance")
    return moment_matched_core(gp, inp.mean, inp.cov)


def predict_linearized(gp: TrainedGP, inp: Gaussian) -> UncertainPrediction:
    """First-order output moments under a proper Gaussian input."""
    chol(inp.cov, "input covariance")
    return linearized_core(gp, inp.mean, inp.cov)


def predict(gp: TrainedGP, inp: Gaussian,
            method: PredictMethod) -> UncertainPrediction:
    if method is PredictMethod.MOMENT_MATCHING:
        return predict_moment_matched(gp, inp)
    if method is PredictMethod.LINEARIZATION:
        return predict_linearized(gp, inp)
    raise ValueError(f"unknown method {method!r}")


def predict_monte_carlo(gp: TrainedGP, inp: Gaussian, n_samples: int,
                        seed: int, chunk: int = 32768) -> UncertainPrediction:
    """Sampling oracle: deterministic given the seed.

    Aggregates by the law of total variance: the output covariance is the
    covariance of per-sample predictive means plus the average per-sample
    predictive variance (which carries the noise term).
    """
    if not is_pd(inp.cov):
        raise NonPositiveDefinite("Monte-Carlo input covariance must be PD")
    rng = np.random.default_rng(seed)
    D, E = inp.dim, gp.output_dim
    s_x = np.zeros(D)
    s_m = np.zeros(E)
    s_mm = np.zeros((E, E))
    s_xm = np.zeros((D, E))
    s_var = np.zeros(E)
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        xs = inp.sample(rng, k)
        means, variances = predict_points(gp, xs)
        s_x += xs.sum(axis=0)
        s_m += means.sum(axis=0)
        s_mm += means.T @ means
        s_xm += xs.T @ means
        s_var += variances.sum(axis=0)
        done += k
    n = float(n_samples)
    mean = s_m / n
    out_cov = s_mm / n - np.outer(mean, mean) + np.diag(s_var / n)
    x_bar = s_x / n
    cross = s_xm / n - np.outer(x_bar, mean)
    L = chol(inp.cov, "input covariance")
    J = np.linalg.solve(L.T, np.linalg.solve(L, cross)).T
    return UncertainPrediction(mean, out_cov, cross, J)
