"""Parametric state-space models and classical smoother baselines.

Two independent code paths live here next to the EP smoother:

- :func:`kalman_rts`: the exact filter/smoother for linear-Gaussian models,
  written as the textbook predict/update/backward-gain recursions.  It is
  the oracle that the EP engine is validated against.
- :func:`eks_smooth`: an extended Kalman smoother for nonlinear parametric
  models, relinearizing at filtered means, plus the same RTS backward pass.

Both return per-step marginals and the one-step-ahead innovation
distributions used for measurement likelihood scoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .gaussians import Gaussian
from .linalg import solve_psd, symmetrize, wrap_to_pi


@dataclass(frozen=True)
class LinearGaussianModel:
    """x' = A x + b + w, z = H x + d + v with Gaussian noise."""

    A: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    d: np.ndarray
    R: np.ndarray
    prior: Gaussian

    def __post_init__(self):
        D = self.prior.dim
        for name, arr, shape in (("A", self.A, (D, D)),
                                 ("Q", self.Q, (D, D)),
                                 ("b", self.b, (D,))):
            if np.asarray(arr).shape != shape:
                raise DimensionMismatch(f"{name} has shape "
                                        f"{np.asarray(arr).shape}, want {shape}")
        E = np.asarray(self.H).shape[0]
        if np.asarray(self.R).shape != (E, E) or np.asarray(self.d).shape != (E,):
            raise DimensionMismatch("measurement shapes inconsistent")

    @property
    def state_dim(self) -> int:
        return self.prior.dim

    @property
    def obs_dim(self) -> int:
        return np.asarray(self.H).shape[0]


@dataclass(frozen=True)
class ParametricModel:
    """Nonlinear model with known transition/measurement maps and Jacobians.

    transition(x, u) -> next state; transition_jac(x, u) -> (D, D).
    measurement(x) -> observation; measurement_jac(x) -> (E, D).
    Additive noise with covariances Q (process) and R (measurement).
    """

    transition: Callable
    transition_jac: Callable
    Q: np.ndarray
    measurement: Callable
    measurement_jac: Callable
    R: np.ndarray
    prior: Gaussian
    control_dim: int = 0
    angle_obs_dims: tuple = ()   # observation dims compared modulo 2 pi

    @property
    def state_dim(self) -> int:
        return self.prior.dim

    @property
    def obs_dim(self) -> int:
        return np.asarray(self.R).shape[0]


def fd_jacobian(fn: Callable, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector map."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    J = np.zeros((f0.shape[0], x.shape[0]))
    for d in range(x.shape[0]):
        step = np.zeros_like(x)
        step[d] = eps
        hi = np.atleast_1d(np.asarray(fn(x + step), dtype=float))
        lo = np.atleast_1d(np.asarray(fn(x - step), dtype=float))
        J[:, d] = (hi - lo) / (2.0 * eps)
    return J


@dataclass
class SmootherResult:
    """Marginals plus the filter's innovation distributions."""

    marginals: list
    innovations: list          # Gaussian over z_t given z_1..t-1
    filtered: list

    @property
    def means(self) -> np.ndarray:
        return np.stack([g.mean for g in self.marginals])

    @property
    def covs(self) -> np.ndarray:
        return np.stack([g.cov for g in self.marginals])


def linear_to_parametric(model: LinearGaussianModel) -> ParametricModel:
    A, b, H, d = (np.asarray(model.A), np.asarray(model.b),
                  np.asarray(model.H), np.asarray(model.d))
    return ParametricModel(
        transition=lambda x, u=None: A @ x + b,
        transition_jac=lambda x, u=None: A,
        Q=np.asarray(model.Q),
        measurement=lambda x: H @ x + d,
        measurement_jac=lambda x: H,
        R=np.asarray(model.R),
        prior=model.prior)


def kalman_rts(model: LinearGaussianModel, Z: np.ndarray) -> SmootherResult:
    """Exact Kalman filter plus RTS smoother for a linear-Gaussian model."""
    A, b = np.asarray(model.A, dtype=float), np.asarray(model.b, dtype=float)
    Q = np.asarray(model.Q, dtype=float)
    H, d = np.asarray(model.H, dtype=float), np.asarray(model.d, dtype=float)
    R = np.asarray(model.R, dtype=float)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T = Z.shape[0]
    D = model.state_dim

    means_f = np.zeros((T, D))
    covs_f = np.zeros((T, D, D))
    means_p = np.zeros((T, D))
    covs_p = np.zeros((T, D, D))
    innovations = []

    m, P = model.prior.mean.copy(), model.prior.cov.copy()
    for t in range(T):
        if t > 0:
            m = A @ m + b
            P = symmetrize(A @ P @ A.T + Q)
        means_p[t], covs_p[t] = m, P
        z_mean = H @ m + d
        S = symmetrize(H @ P @ H.T + R)
        innovations.append(Gaussian(z_mean, S))
        K = solve_psd(S, H @ P, "innovation covariance").T
        m = m + K @ (Z[t] - z_mean)
        P = symmetrize(P - K @ H @ P)
        means_f[t], covs_f[t] = m, P

    filtered = [Gaussian(means_f[t], covs_f[t]) for t in range(T)]
    means_s = means_f.copy()
    covs_s = covs_f.copy()
    for t in range(T - 2, -1, -1):
        Ck = solve_psd(covs_p[t + 1], A @ covs_f[t],
                       "predicted covariance").T
        means_s[t] = means_f[t] + Ck @ (means_s[t + 1] - means_p[t + 1])
        covs_s[t] = symmetrize(covs_f[t]
                               + Ck @ (covs_s[t + 1] - covs_p[t + 1]) @ Ck.T)
    marginals = [Gaussian(means_s[t], covs_s[t]) for t in range(T)]
    return SmootherResult(marginals, innovations, filtered)


def eks_smooth(model: ParametricModel, Z: np.ndarray,
               U: np.ndarray | None = None) -> SmootherResult:
    """Extended Kalman smoother: EKF with relinearization, then RTS."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T = Z.shape[0]
    D = model.state_dim
    Q = np.asarray(model.Q, dtype=float)
    R = np.asarray(model.R, dtype=float)
    if U is None:
        U = np.zeros((T, max(model.control_dim, 0)))

    means_f = np.zeros((T, D))
    covs_f = np.zeros((T, D, D))
    means_p = np.zeros((T, D))
    covs_p = np.zeros((T, D, D))
    Fs = np.zeros((T, D, D))      # transition Jacobian used for step t-1 -> t
    innovations = []

    m, P = model.prior.mean.copy(), model.prior.cov.copy()
    for t in range(T):
        if t > 0:
            u = U[t - 1] if model.control_dim else None
            F = np.asarray(model.transition_jac(m, u), dtype=float)
            Fs[t] = F
            m = np.atleast_1d(np.asarray(model.transition(m, u), dtype=float))
            P = symmetrize(F @ P @ F.T + Q)
        means_p[t], covs_p[t] = m, P
        Hj = np.asarray(model.measurement_jac(m), dtype=float)
        z_mean = np.atleast_1d(np.asarray(model.measurement(m), dtype=float))
        S = symmetrize(Hj @ P @ Hj.T + R)
        innovations.append(Gaussian(z_mean, S))
        K = solve_psd(S, Hj @ P, "innovation covariance").T
        resid = Z[t] - z_mean
        for d in model.angle_obs_dims:
            resid[d] = wrap_to_pi(resid[d])
        m = m + K @ resid
        P = symmetrize(P - K @ Hj @ P)
        means_f[t], covs_f[t] = m, P

    filtered = [Gaussian(means_f[t], covs_f[t]) for t in range(T)]
    means_s = means_f.copy()
    covs_s = covs_f.copy()
    for t in range(T - 2, -1, -1):
        Ck = solve_psd(covs_p[t + 1], Fs[t + 1] @ covs_f[t],
                       "predicted covariance").T
        means_s[t] = means_f[t] + Ck @ (means_s[t + 1] - means_p[t + 1])
        covs_s[t] = symmetrize(covs_f[t]
                               + Ck @ (covs_s[t + 1] - covs_p[t + 1]) @ Ck.T)
    marginals = [Gaussian(means_s[t], covs_s[t]) for t in range(T)]
    return SmootherResult(marginals, innovations, filtered)
