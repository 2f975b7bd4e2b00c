"""Iterative Gaussian expectation propagation on a dynamical-system chain.

Each latent state x_t owns three messages: a forward message from the
transition factor behind it, a measurement message, and a backward message
from the transition factor ahead of it.  One EP iteration is a forward pass
(forward and measurement factors at t = 1..T) followed by a reverse pass
(backward factors at t = T-1..1).  On a linear-Gaussian model the first
iteration reproduces the RTS smoother exactly and the second is a fixed
point; on GP models further iterations refine the linearization points and
keep improving the marginals.

Factor updates follow the log-partition-gradient form: with Z(cavity) the
Gaussian approximation of the factor's partition function and
grads = (log Z, d/dmean, d/dcov),

    mean_new = mean_cav + cov_cav . dmean
    cov_new  = cov_cav - cov_cav (dmean dmean^T - 2 dcov) cov_cav

and the site message is Z times the ratio of new marginal to cavity, with
the scale carried exactly through natural parameters.  Updates whose cavity
or result is not positive definite are skipped and counted; state is never
half-written.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import LinearGaussianModel, ParametricModel
from .errors import (DimensionMismatch, DivergenceError, NonPositiveDefinite,
                     UpdateSkipped)
from .gaussians import Gaussian, NaturalGaussian, divide, moment_distance, multiply
from .gp import GPDSModel
from .linalg import chol, chol_solve, logdet_from_chol, symmetrize, wrap_to_pi
from .uncertain import (PredictMethod, UncertainPrediction, linearized_core,
                        moment_matched_core)

_LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# options, diagnostics, message storage

@dataclass
class EPOptions:
    """Knobs of the EP loop.

    damping < 1 blends each new site with the previous one in natural
    parameters.  init_marginal_var is the variance of the vague marginals
    at t > 1 before the first sweep.
    """

    method: PredictMethod = PredictMethod.MOMENT_MATCHING
    max_iters: int = 100
    tol: float = 1e-6
    damping: float = 1.0
    init_marginal_var: float = 1e10


@dataclass
class EPDiagnostics:
    """Per-run record of the EP loop's behavior."""

    iterations: int = 0
    converged: bool = False
    convergence: list = field(default_factory=list)
    attempted_per_iteration: list = field(default_factory=list)
    skipped_per_iteration: list = field(default_factory=list)
    nll_x_per_iteration: list = field(default_factory=list)
    nll_z_per_iteration: list = field(default_factory=list)
    wall_time: float = 0.0
    marginal_means: np.ndarray | None = None
    marginal_covs: np.ndarray | None = None

    @property
    def skipped_total(self) -> int:
        return int(sum(self.skipped_per_iteration))

    @property
    def attempted_total(self) -> int:
        return int(sum(self.attempted_per_iteration))

    @property
    def skipped_fraction(self) -> float:
        total = self.attempted_total
        return self.skipped_total / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "convergence": [float(v) for v in self.convergence],
            "attempted_per_iteration": list(self.attempted_per_iteration),
            "skipped_per_iteration": list(self.skipped_per_iteration),
            "skipped_total": self.skipped_total,
            "skipped_fraction": self.skipped_fraction,
            "nll_x_per_iteration": [float(v) for v in self.nll_x_per_iteration],
            "nll_z_per_iteration": [float(v) for v in self.nll_z_per_iteration],
            "wall_time": self.wall_time,
            "marginal_means": None if self.marginal_means is None
            else self.marginal_means.tolist(),
            "marginal_covs": None if self.marginal_covs is None
            else self.marginal_covs.tolist(),
        }


@dataclass
class MessageBank:
    """Marginals plus the three site messages per time step.

    Marginals are stored normalized in moment form; sites live in natural
    form so indefinite sites are representable.
    """

    marginals: list
    fwd: list
    up: list
    back: list

    @classmethod
    def init(cls, prior: Gaussian, T: int,
             init_var: float = 1e10) -> "MessageBank":
        D = prior.dim
        vague = Gaussian(np.zeros(D), init_var * np.eye(D))
        marginals = [prior if t == 0 else vague for t in range(T)]
        fwd = [prior.to_natural() if t == 0 else NaturalGaussian.unit(D)
               for t in range(T)]
        up = [NaturalGaussian.unit(D) for _ in range(T)]
        back = [NaturalGaussian.unit(D) for _ in range(T)]
        return cls(marginals, fwd, up, back)

    @property
    def T(self) -> int:
        return len(self.marginals)


# ---------------------------------------------------------------------------
# single-factor operations

@dataclass(frozen=True)
class LogPartitionGrads:
    """Value and derivatives of the log partition function at the cavity."""

    log_z: float
    dmean: np.ndarray       # gradient w.r.t. cavity mean, shape (D,)
    dcov: np.ndarray        # gradient w.r.t. cavity covariance, shape (D, D)


def cavity(marginal: Gaussian, site: NaturalGaussian) -> Gaussian:
    """Marginal with one site divided out, as a normalized Gaussian.

    Raises :class:`UpdateSkipped` when the cavity precision is indefinite.
    """
    if site.improper and not np.any(site.precision) and not np.any(site.shift):
        return marginal
    ratio = divide(marginal, site)
    try:
        g = ratio.to_moment()
    except NonPositiveDefinite as exc:
        raise UpdateSkipped(f"indefinite cavity: {exc}") from exc
    return Gaussian(g.mean, g.cov)


def _gaussian_grads(pred_mean: np.ndarray, S: np.ndarray, J: np.ndarray,
                    target: np.ndarray) -> LogPartitionGrads:
    """Grads of log N(target | pred_mean, S) with d pred_mean / d mu = J.

    The covariance derivative uses the consistent convention in which the
    only dependence of S on the cavity covariance is the propagated term
    J cov J^T, giving dcov = (dmean dmean^T - J^T S^-1 J) / 2.
    """
    LS = chol(S, "predictive covariance")
    r = target - pred_mean
    sol = chol_solve(LS, r)
    log_z = -0.5 * (r.shape[0] * _LOG_2PI + logdet_from_chol(LS)
                    + float(r @ sol))
    dmean = J.T @ sol
    B = symmetrize(J.T @ chol_solve(LS, J))
    dcov = 0.5 * (np.outer(dmean, dmean) - B)
    return LogPartitionGrads(log_z, dmean, dcov)


def nearest_branch(z: np.ndarray, center: np.ndarray, dims) -> np.ndarray:
    """Relocate angular entries of ``z`` onto the 2-pi branch nearest ``center``.

    Non-angular entries pass through.  The result differs from ``z`` only by
    multiples of 2 pi in ``dims``, so a Gaussian density over those entries is
    evaluated on the branch the prediction lives on.
    """
    z = np.array(z, dtype=float)
    for d in dims:
        z[d] = center[d] + wrap_to_pi(z[d] - center[d])
    return z


def measurement_grads(gp_g, cav: Gaussian, z: np.ndarray,
                      method: PredictMethod) -> LogPartitionGrads:
    """Grads of the measurement factor's log partition function."""
    pred = _predict_gp(gp_g, cav.mean, cav.cov, method)
    return _gaussian_grads(pred.out_mean, pred.out_cov, pred.jacobian,
                           np.asarray(z, dtype=float))


def backward_grads(gp_h, cav_t: Gaussian, fwd_cavity_next: Gaussian,
                   method: PredictMethod) -> LogPartitionGrads:
    """Grads of the backward factor's log partition function.

    The factor integrates the transition density against the next step's
    forward cavity, so the predictive covariance is inflated by that
    cavity's covariance.
    """
    pred = _predict_gp(gp_h, cav_t.mean, cav_t.cov, method)
    S = pred.out_cov + fwd_cavity_next.cov
    return _gaussian_grads(pred.out_mean, S, pred.jacobian,
                           fwd_cavity_next.mean)


def marginal_from_grads(cav: Gaussian, grads: LogPartitionGrads) -> Gaussian:
    """New marginal moments from the cavity and log-partition grads."""
    A = symmetrize(np.outer(grads.dmean, grads.dmean) - 2.0 * grads.dcov)
    mean = cav.mean + cav.cov @ grads.dmean
    cov = symmetrize(cav.cov - cav.cov @ A @ cav.cov)
    try:
        chol(cov, "updated marginal covariance")
    except NonPositiveDefinite as exc:
        raise UpdateSkipped(f"marginal update not PD: {exc}") from exc
    return Gaussian(mean, cov)


def site_update(new_marginal: Gaussian, cav: Gaussian,
                grads: LogPartitionGrads, damping: float = 1.0,
                old_site: NaturalGaussian | None = None) -> NaturalGaussian:
    """Site message implied by a marginal update.

    The site is Z times the ratio of the new marginal to the cavity, its
    scale carried exactly through natural parameters; with damping < 1 the
    result is the convex blend of old and new site in natural parameters.
    """
    target = divide(new_marginal, cav).scaled(grads.log_z)
    return _blend(old_site, target, damping)


def _blend(old: NaturalGaussian | None, new: NaturalGaussian,
           damping: float) -> NaturalGaussian:
    """Convex blend of two sites in natural parameters."""
    if damping >= 1.0 or old is None:
        return new
    d = float(damping)
    keep = 1.0 - d
    return NaturalGaussian(keep * old.precision + d * new.precision,
                           keep * old.shift + d * new.shift,
                           keep * old.log_scale + d * new.log_scale)


def kalman_form_measurement_update(cav: Gaussian, pred: UncertainPrediction,
                                   z: np.ndarray) -> Gaussian:
    """Measurement update written with the explicit Kalman gain.

    Independent of :func:`marginal_from_grads`; the two agree because the
    prediction contract guarantees cross_cov = cov_cav @ jacobian^T.
    """
    z = np.asarray(z, dtype=float)
    S = pred.out_cov
    C = pred.cross_cov
    K = chol_solve(chol(S, "innovation covariance"), C.T).T
    mean = cav.mean + K @ (z - pred.out_mean)
    cov = symmetrize(cav.cov - K @ C.T)
    return Gaussian(mean, cov)


def forward_update(gp_h, back_cavity_prev: Gaussian,
                   fwd_cavity_t: Gaussian | NaturalGaussian,
                   method: PredictMethod):
    """Propagate the previous step's cavity and refresh the forward message.

    Returns (new_marginal, new_forward_site).  The forward message is the
    propagated Gaussian itself; the marginal is its product with the
    forward cavity at t.
    """
    pred = _predict_gp(gp_h, back_cavity_prev.mean, back_cavity_prev.cov,
                       method)
    site_gauss = Gaussian(pred.out_mean, pred.out_cov)
    try:
        site = site_gauss.to_natural()
        marg = multiply(site, _as_natural(fwd_cavity_t))
    except NonPositiveDefinite as exc:
        raise UpdateSkipped(f"forward update not PD: {exc}") from exc
    return Gaussian(marg.mean, marg.cov), site


def _as_natural(g):
    return g.to_natural() if isinstance(g, Gaussian) else g


def _predict_gp(gp, mean, cov, method: PredictMethod) -> UncertainPrediction:
    if method is PredictMethod.MOMENT_MATCHING:
        return moment_matched_core(gp, mean, cov)
    return linearized_core(gp, mean, cov)


# ---------------------------------------------------------------------------
# model dispatch: every model type exposes the same two predictors

class _GPOps:
    def __init__(self, model: GPDSModel, method: PredictMethod):
        self.model = model
        self.method = method
        self.obs_wrap_dims = model.angle_obs_dims

    def _chart_shift(self, mean: np.ndarray) -> np.ndarray:
        """Multiple-of-2-pi offset taking angular means into (-pi, pi].

        The GPs are trained on one angular chart; states that have wound past
        it are handled by translating the input belief onto the chart and, for
        the transition, translating the angular outputs back.  A constant
        shift leaves covariances, cross-covariances and Jacobians untouched,
        so predictions through the shifted belief are exact for a model whose
        angular dynamics repeat every revolution.
        """
        s = np.zeros_like(mean)
        for d in self.model.angle_state_dims:
            s[d] = 2.0 * np.pi * np.round(mean[d] / (2.0 * np.pi))
        return s

    def transition(self, cav: Gaussian, u) -> UncertainPrediction:
        D = self.model.state_dim
        U = self.model.control_dim
        shift = self._chart_shift(cav.mean)
        if U:
            if u is None:
                raise DimensionMismatch("model expects controls")
            mean = np.concatenate([cav.mean - shift, np.asarray(u, dtype=float)])
            cov = np.zeros((D + U, D + U))
            cov[:D, :D] = cav.cov
        else:
            mean, cov = cav.mean - shift, cav.cov
        pred = _predict_gp(self.model.transition, mean, cov, self.method)
        out_mean = pred.out_mean
        if np.any(shift):
            out_mean = out_mean.copy()
            for d in self.model.angle_state_dims:
                out_mean[d] += shift[d]
        if U:  # keep only the state blocks of the joint input
            return UncertainPrediction(out_mean, pred.out_cov,
                                       pred.cross_cov[:D], pred.jacobian[:, :D])
        return UncertainPrediction(out_mean, pred.out_cov,
                                   pred.cross_cov, pred.jacobian)

    def measurement(self, cav: Gaussian) -> UncertainPrediction:
        shift = self._chart_shift(cav.mean)
        return _predict_gp(self.model.measurement, cav.mean - shift, cav.cov,
                           self.method)


class _LinearOps:
    def __init__(self, model: LinearGaussianModel):
        self.model = model
        self.obs_wrap_dims = ()

    def transition(self, cav: Gaussian, u) -> UncertainPrediction:
        m = self.model
        A = np.asarray(m.A, dtype=float)
        mean = A @ cav.mean + np.asarray(m.b, dtype=float)
        cov = symmetrize(A @ cav.cov @ A.T + np.asarray(m.Q, dtype=float))
        return UncertainPrediction(mean, cov, cav.cov @ A.T, A)

    def measurement(self, cav: Gaussian) -> UncertainPrediction:
        m = self.model
        H = np.asarray(m.H, dtype=float)
        mean = H @ cav.mean + np.asarray(m.d, dtype=float)
        cov = symmetrize(H @ cav.cov @ H.T + np.asarray(m.R, dtype=float))
        return UncertainPrediction(mean, cov, cav.cov @ H.T, H)


class _ParametricOps:
    def __init__(self, model: ParametricModel):
        self.model = model
        self.obs_wrap_dims = model.angle_obs_dims

    def transition(self, cav: Gaussian, u) -> UncertainPrediction:
        m = self.model
        F = np.asarray(m.transition_jac(cav.mean, u), dtype=float)
        mean = np.atleast_1d(np.asarray(m.transition(cav.mean, u), dtype=float))
        cov = symmetrize(F @ cav.cov @ F.T + np.asarray(m.Q, dtype=float))
        return UncertainPrediction(mean, cov, cav.cov @ F.T, F)

    def measurement(self, cav: Gaussian) -> UncertainPrediction:
        m = self.model
        H = np.asarray(m.measurement_jac(cav.mean), dtype=float)
        mean = np.atleast_1d(np.asarray(m.measurement(cav.mean), dtype=float))
        cov = symmetrize(H @ cav.cov @ H.T + np.asarray(m.R, dtype=float))
        return UncertainPrediction(mean, cov, cav.cov @ H.T, H)


def model_ops(model, method: PredictMethod):
    if isinstance(model, GPDSModel):
        return _GPOps(model, method)
    if isinstance(model, LinearGaussianModel):
        return _LinearOps(model)
    if isinstance(model, ParametricModel):
        return _ParametricOps(model)
    raise TypeError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# the smoother

class EPSmoother:
    """Message-passing state machine over one observation sequence."""

    def __init__(self, model, Z, controls=None, opts: EPOptions | None = None):
        self.opts = opts or EPOptions()
        self.model = model
        self.ops = model_ops(model, self.opts.method)
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.Z.shape[1] != self._obs_dim():
            raise DimensionMismatch(
                f"observations have dim {self.Z.shape[1]}, "
                f"model expects {self._obs_dim()}")
        T = self.Z.shape[0]
        ctrl_dim = getattr(model, "control_dim", 0)
        if ctrl_dim:
            if controls is None:
                raise DimensionMismatch("model expects a control sequence")
            U = np.atleast_2d(np.asarray(controls, dtype=float))
            if U.shape[0] not in (T, T - 1) or U.shape[1] != ctrl_dim:
                raise DimensionMismatch(
                    f"controls have shape {U.shape}, want ({T}|{T - 1}, {ctrl_dim})")
            self.U = U[:T - 1]
        else:
            self.U = None
        prior = model.prior
        self.bank = MessageBank.init(prior, T, self.opts.init_marginal_var)
        self.diag = EPDiagnostics()
        self.predictives = [None] * T      # N(z_t | cavity) from forward pass
        self._skipped = 0
        self._attempted = 0

    def _obs_dim(self):
        return self.model.obs_dim

    def _control(self, t):
        return None if self.U is None else self.U[t]

    def _attempt(self, fn) -> bool:
        """Run one factor update; count skips; state stays clean on failure.

        Indefinite cavities and non-PD intermediate matrices both skip the
        update; structural errors (dimension mismatches) still propagate.
        """
        self._attempted += 1
        try:
            fn()
            return True
        except (UpdateSkipped, NonPositiveDefinite):
            self._skipped += 1
            return False

    # -- factor updates ----------------------------------------------------

    def _update_forward(self, t: int):
        bank = self.bank
        if t == 0:
            # the first forward message is pinned to the prior
            prior_nat = self.model.prior.to_natural()
            fwd_cav = divide(bank.marginals[0], bank.fwd[0])
            marg = multiply(prior_nat, fwd_cav)
            bank.fwd[0] = prior_nat
            bank.marginals[0] = Gaussian(marg.mean, marg.cov)
            return
        prev_cav = cavity(bank.marginals[t - 1], bank.back[t - 1])
        pred = self.ops.transition(prev_cav, self._control(t - 1))
        target = Gaussian(pred.out_mean, pred.out_cov).to_natural()
        site = _blend(bank.fwd[t], target, self.opts.damping)
        fwd_cav = divide(bank.marginals[t], bank.fwd[t])
        marg = multiply(site, fwd_cav)
        bank.fwd[t] = site
        bank.marginals[t] = Gaussian(marg.mean, marg.cov)

    def _update_measurement(self, t: int):
        bank = self.bank
        cav = cavity(bank.marginals[t], bank.up[t])
        pred = self.ops.measurement(cav)
        self.predictives[t] = Gaussian(pred.out_mean, pred.out_cov)
        z = nearest_branch(self.Z[t], pred.out_mean, self.ops.obs_wrap_dims)
        grads = _gaussian_grads(pred.out_mean, pred.out_cov, pred.jacobian, z)
        marg = marginal_from_grads(cav, grads)
        site = site_update(marg, cav, grads, self.opts.damping, bank.up[t])
        if self.opts.damping < 1.0:
            try:
                blended = multiply(site, cav)
            except NonPositiveDefinite as exc:
                raise UpdateSkipped(f"damped marginal not PD: {exc}") from exc
            marg = Gaussian(blended.mean, blended.cov)
        bank.up[t] = site
        bank.marginals[t] = marg

    def _update_backward(self, t: int):
        bank = self.bank
        cav_t = cavity(bank.marginals[t], bank.back[t])
        fwd_cav_next = cavity(bank.marginals[t + 1], bank.fwd[t + 1])
        pred = self.ops.transition(cav_t, self._control(t))
        S = pred.out_cov + fwd_cav_next.cov
        grads = _gaussian_grads(pred.out_mean, S, pred.jacobian,
                                fwd_cav_next.mean)
        marg = marginal_from_grads(cav_t, grads)
        site = site_update(marg, cav_t, grads, self.opts.damping, bank.back[t])
        if self.opts.damping < 1.0:
            try:
                blended = multiply(site, cav_t)
            except NonPositiveDefinite as exc:
                raise UpdateSkipped(f"damped marginal not PD: {exc}") from exc
            marg = Gaussian(blended.mean, blended.cov)
        bank.back[t] = site
        bank.marginals[t] = marg

    # -- passes ------------------------------------------------------------

    def forward_pass(self):
        for t in range(self.bank.T):
            self._attempt(lambda: self._update_forward(t))
            self._attempt(lambda: self._update_measurement(t))

    def backward_pass(self):
        for t in range(self.bank.T - 2, -1, -1):
            self._attempt(lambda: self._update_backward(t))

    def _nll_z(self) -> float:
        wrap = self.ops.obs_wrap_dims
        vals = [-(p.log_pdf(nearest_branch(self.Z[t], p.mean, wrap)))
                for t, p in enumerate(self.predictives) if p is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def _nll_x(self, X_true) -> float:
        vals = [-(self.bank.marginals[t].log_pdf(X_true[t]))
                for t in range(self.bank.T)]
        return float(np.mean(vals))

    def run(self, X_true=None):
        """Iterate to convergence; returns (marginals, bank, diagnostics)."""
        t0 = time.monotonic()
        opts = self.opts
        for it in range(opts.max_iters):
            previous = list(self.bank.marginals)
            self._skipped = 0
            self._attempted = 0
            self.forward_pass()
            self.backward_pass()
            self.diag.iterations = it + 1
            self.diag.attempted_per_iteration.append(self._attempted)
            self.diag.skipped_per_iteration.append(self._skipped)
            if self._attempted > 0 and self._skipped == self._attempted:
                self.diag.wall_time = time.monotonic() - t0
                raise DivergenceError(f"every update skipped in sweep {it + 1}")
            stat = float(np.mean([moment_distance(a, b) for a, b
                                  in zip(self.bank.marginals, previous)]))
            self.diag.convergence.append(stat)
            self.diag.nll_z_per_iteration.append(self._nll_z())
            if X_true is not None:
                self.diag.nll_x_per_iteration.append(self._nll_x(X_true))
            if stat < opts.tol:
                self.diag.converged = True
                break
        self.diag.wall_time = time.monotonic() - t0
        self.diag.marginal_means = np.stack(
            [g.mean for g in self.bank.marginals])
        self.diag.marginal_covs = np.stack(
            [g.cov for g in self.bank.marginals])
        return self.bank.marginals, self.bank, self.diag


def ep_smooth(model, Z, controls=None, opts: EPOptions | None = None,
              X_true=None):
    """Smooth one observation sequence; see :class:`EPSmoother`."""
    return EPSmoother(model, Z, controls, opts).run(X_true)


def one_step_predictives(bank: MessageBank, model,
                         method: PredictMethod) -> list:
    """Measurement predictives from each step's measurement cavity.

    After a forward sweep the cavity at t carries exactly the information
    that precedes the measurement, so these are one-step-ahead predictive
    distributions; after further sweeps they are leave-one-out predictives.
    """
    ops = model_ops(model, method)
    out = []
    for t in range(bank.T):
        cav = cavity(bank.marginals[t], bank.up[t])
        pred = ops.measurement(cav)
        out.append(Gaussian(pred.out_mean, pred.out_cov))
    return out
