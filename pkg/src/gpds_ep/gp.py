"""Squared-exponential ARD Gaussian process regression.

One :class:`TrainedGP` holds independent GPs for each output dimension over a
shared set of training inputs.  Predictive variances always include the
per-dimension observation noise, so process and measurement noise live inside
the models rather than as separate additive terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatch, NonFinite
from .gaussians import Gaussian
from .linalg import chol, chol_inv, chol_solve, logdet_from_chol, symmetrize

_LOG_2PI = float(np.log(2.0 * np.pi))

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GPHyper:
    """Hyperparameters of one output dimension.

    lengthscales are per input dimension; signal_var and noise_var are
    variances (not standard deviations).
    """

    lengthscales: np.ndarray
    signal_var: float
    noise_var: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("hyperparameters must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_var", float(self.signal_var))
        object.__setattr__(self, "noise_var", float(self.noise_var))

    def to_dict(self) -> dict:
        return {"lengthscales": self.lengthscales.tolist(),
                "signal_var": self.signal_var,
                "noise_var": self.noise_var}

    @classmethod
    def from_dict(cls, d: dict) -> "GPHyper":
        return cls(np.asarray(d["lengthscales"], dtype=float),
                   d["signal_var"], d["noise_var"])


def kernel_se_ard(x1, x2, hyper: GPHyper) -> float:
    """Squared-exponential ARD kernel between two points (noise-free)."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    d = (x1 - x2) / hyper.lengthscales
    return hyper.signal_var * float(np.exp(-0.5 * d @ d))


def _kernel_matrix(X: np.ndarray, hyper: GPHyper) -> np.ndarray:
    """Noise-free kernel matrix over the training inputs."""
    S = X / hyper.lengthscales
    sq = np.sum(S * S, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (S @ S.T)
    np.maximum(d2, 0.0, out=d2)
    return hyper.signal_var * np.exp(-0.5 * d2)


class TrainedGP:
    """GP regressors for E output dims over shared training inputs.

    Precomputes, per output dimension, the Cholesky factor of
    ``K = K_f + noise_var * I``, the weight vector ``beta = K^-1 y`` and the
    full inverse ``K^-1`` (used by the uncertain-input moment matcher).
    """

    def __init__(self, X, Y, hypers: list[GPHyper]):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatch(
                f"{X.shape[0]} inputs vs {Y.shape[0]} target rows")
        if len(hypers) != Y.shape[1]:
            raise DimensionMismatch(
                f"{len(hypers)} hyper sets vs {Y.shape[1]} output dims")
        for h in hypers:
            if h.lengthscales.shape[0] != X.shape[1]:
                raise DimensionMismatch("lengthscale count != input dim")
        self.X = X
        self.Y = Y
        self.hypers = list(hypers)
        n = X.shape[0]
        self.beta = np.zeros((self.output_dim, n))
        self.iK = np.zeros((self.output_dim, n, n))
        self._chols = []
        for a, h in enumerate(self.hypers):
            if n == 0:
                self._chols.append(np.zeros((0, 0)))
                continue
            K = _kernel_matrix(X, h) + h.noise_var * np.eye(n)
            L = chol(K, "training kernel matrix")
            self._chols.append(L)
            self.beta[a] = chol_solve(L, Y[:, a])
            self.iK[a] = chol_inv(L)
        # packed hyper arrays for the moment-matching backends
        self.inv_ell2 = np.stack([1.0 / h.lengthscales**2 for h in hypers])
        self.log_sf2 = np.array([np.log(h.signal_var) for h in hypers])
        self.sf2 = np.array([h.signal_var for h in hypers])
        self.sw2 = np.array([h.noise_var for h in hypers])

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def output_dim(self) -> int:
        return self.Y.shape[1]

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION,
                "kind": "gp",
                "inputs": self.X.tolist(),
                "targets": self.Y.tolist(),
                "hyper": [h.to_dict() for h in self.hypers]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedGP":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema')!r}")
        hypers = [GPHyper.from_dict(h) for h in d["hyper"]]
        X = np.asarray(d["inputs"], dtype=float)
        if X.size == 0:
            X = X.reshape(0, len(hypers[0].lengthscales))
        Y = np.asarray(d["targets"], dtype=float)
        if Y.size == 0:
            Y = Y.reshape(0, len(hypers))
        return cls(X, Y, hypers)


def train(X, Y, hypers: list[GPHyper]) -> TrainedGP:
    """Precompute the per-dimension factorizations for prediction."""
    return TrainedGP(X, Y, hypers)


def predict_points(gp: TrainedGP, Xs: np.ndarray):
    """Vectorized predictions at m deterministic inputs.

    Returns (means, variances), each of shape (m, E); variances include
    the observation noise.
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    m = Xs.shape[0]
    means = np.zeros((m, gp.output_dim))
    variances = np.zeros((m, gp.output_dim))
    for a, h in enumerate(gp.hypers):
        if gp.n_train == 0:
            variances[:, a] = h.signal_var + h.noise_var
            continue
        S = gp.X / h.lengthscales
        T = Xs / h.lengthscales
        d2 = (np.sum(T * T, axis=1)[:, None] + np.sum(S * S, axis=1)[None, :]
              - 2.0 * (T @ S.T))
        np.maximum(d2, 0.0, out=d2)
        Ks = h.signal_var * np.exp(-0.5 * d2)          # (m, n)
        means[:, a] = Ks @ gp.beta[a]
        KiK = Ks @ gp.iK[a]
        var = h.signal_var - np.einsum("mn,mn->m", KiK, Ks) + h.noise_var
        variances[:, a] = np.maximum(var, h.noise_var * 1e-12)
    return means, variances


def predict_point(gp: TrainedGP, x):
    """Mean and variance (with noise) of each output at one input point."""
    means, variances = predict_points(gp, np.atleast_2d(x))
    return means[0], variances[0]


# ---------------------------------------------------------------------------
# marginal likelihood and hyperparameter fitting

def log_marginal_likelihood(X, y, hyper: GPHyper) -> float:
    """Log marginal likelihood of one output dimension."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    K = _kernel_matrix(X, hyper) + hyper.noise_var * np.eye(n)
    L = chol(K, "kernel matrix")
    alpha = chol_solve(L, y)
    return float(-0.5 * y @ alpha - 0.5 * logdet_from_chol(L)
                 - 0.5 * n * _LOG_2PI)


def _lml_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Value and gradient of the log marginal likelihood.

    theta = (log lengthscales, log sigma_f, log sigma_w); the gradient is in
    this log parameterization.
    """
    D = X.shape[1]
    n = X.shape[0]
    ell = np.exp(theta[:D])
    sf2 = np.exp(2.0 * theta[D])
    sw2 = np.exp(2.0 * theta[D + 1])
    S = X / ell
    sq = np.sum(S * S, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (S @ S.T)
    np.maximum(d2, 0.0, out=d2)
    Kf = sf2 * np.exp(-0.5 * d2)
    K = Kf + sw2 * np.eye(n)
    L = chol(K, "kernel matrix")
    alpha = chol_solve(L, y)
    iK = chol_inv(L)
    lml = float(-0.5 * y @ alpha - 0.5 * logdet_from_chol(L)
                - 0.5 * n * _LOG_2PI)
    A = np.outer(alpha, alpha) - iK
    grad = np.zeros_like(theta)
    for d in range(D):
        diff = (X[:, d][:, None] - X[:, d][None, :]) / ell[d]
        grad[d] = 0.5 * float(np.sum(A * (Kf * diff * diff)))
    grad[D] = float(np.sum(A * Kf))            # d/dlog sigma_f: 2 Kf inside tr
    grad[D + 1] = sw2 * float(np.trace(A))     # d/dlog sigma_w: 2 sw2 I
    return lml, grad


def fit_hyperparameters(X, Y, init: list[GPHyper], iters: int = 200) -> list[GPHyper]:
    """Maximize each dimension's log marginal likelihood in log-hyper space.

    Deterministic given the initial values and the iteration budget;
    ``iters = 0`` returns the initial values unchanged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if iters == 0:
        return list(init)
    fitted = []
    for a, h0 in enumerate(init):
        y = Y[:, a]
        theta0 = np.concatenate([np.log(h0.lengthscales),
                                 [0.5 * np.log(h0.signal_var)],
                                 [0.5 * np.log(h0.noise_var)]])
        val0, _ = _lml_and_grad(theta0, X, y)
        if not np.isfinite(val0):
            raise NonFinite(f"log marginal likelihood not finite at init (dim {a})")

        def negative(theta):
            val, grad = _lml_and_grad(theta, X, y)
            return -val, -grad

        res = minimize(negative, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": iters})
        theta = res.x if np.isfinite(res.fun) else theta0
        D = X.shape[1]
        fitted.append(GPHyper(np.exp(theta[:D]),
                              float(np.exp(2.0 * theta[D])),
                              float(np.exp(2.0 * theta[D + 1]))))
    return fitted


def default_init(X, Y) -> list[GPHyper]:
    """Data-driven starting hyperparameters for fitting."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    spread = np.std(X, axis=0)
    spread[spread <= 0] = 1.0
    init = []
    for a in range(Y.shape[1]):
        var_y = max(float(np.var(Y[:, a])), 1e-4)
        init.append(GPHyper(spread, var_y, var_y / 10.0))
    return init


# ---------------------------------------------------------------------------
# full dynamical-system model

@dataclass
class GPDSModel:
    """Transition and measurement GPs plus the initial-state prior.

    The transition GP maps (state, control) to next state; the measurement
    GP maps state to observation.  Noise lives inside each GP's per-dimension
    noise variance.
    """

    transition: TrainedGP
    measurement: TrainedGP
    prior: Gaussian
    control_dim: int = 0
    angle_state_dims: tuple = ()
    angle_obs_dims: tuple = ()

    def __post_init__(self):
        D = self.prior.dim
        if self.transition.input_dim != D + self.control_dim:
            raise DimensionMismatch("transition input dim != state + control dim")
        if self.transition.output_dim != D:
            raise DimensionMismatch("transition output dim != state dim")
        if self.measurement.input_dim != D:
            raise DimensionMismatch("measurement input dim != state dim")
        self.angle_state_dims = tuple(int(i) for i in self.angle_state_dims)
        self.angle_obs_dims = tuple(int(i) for i in self.angle_obs_dims)
        if any(i < 0 or i >= D for i in self.angle_state_dims):
            raise DimensionMismatch("angle state dim out of range")
        if any(i < 0 or i >= self.measurement.output_dim for i in self.angle_obs_dims):
            raise DimensionMismatch("angle observation dim out of range")

    @property
    def state_dim(self) -> int:
        return self.prior.dim

    @property
    def obs_dim(self) -> int:
        return self.measurement.output_dim

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION,
                "kind": "gpds-model",
                "transition": self.transition.to_dict(),
                "measurement": self.measurement.to_dict(),
                "prior": {"mean": self.prior.mean.tolist(),
                          "cov": self.prior.cov.tolist()},
                "control_dim": self.control_dim,
                "angle_state_dims": list(self.angle_state_dims),
                "angle_obs_dims": list(self.angle_obs_dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "GPDSModel":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('schema')!r}")
        prior = Gaussian(np.asarray(d["prior"]["mean"], dtype=float),
                         np.asarray(d["prior"]["cov"], dtype=float))
        return cls(TrainedGP.from_dict(d["transition"]),
                   TrainedGP.from_dict(d["measurement"]),
                   prior, int(d.get("control_dim", 0)),
                   tuple(d.get("angle_state_dims", ())),
                   tuple(d.get("angle_obs_dims", ())))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GPDSModel":
        return cls.from_dict(json.loads(Path(path).read_text()))
