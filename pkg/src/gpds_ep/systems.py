"""Benchmark dynamical systems and trajectory file I/O.

Two systems:

- a scalar sine map, x' = 4 sin(x) + w with z = 4 sin(x) + v, both noise
  standard deviations 0.1 and prior N(0, 1);
- a torque-driven rod pendulum observed by two bearings-only sensors,
  integrated with RK4 at 200 ms steps under zero-order-hold torques.

Trajectories serialize to CSV (columns t, x_*, z_*, u_*) with a JSON
metadata sidecar carrying the seed and system configuration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import ParametricModel, fd_jacobian
from .errors import DimensionMismatch, SensorCoincidence
from .gaussians import Gaussian
from .gp import GPDSModel, default_init, fit_hyperparameters, train
from .linalg import wrap_to_pi


@dataclass
class Trajectory:
    """States, observations and optional controls of one rollout.

    U has one row per transition (T - 1 rows); the CSV form pads the last
    control row with zeros to stay rectangular.
    """

    X: np.ndarray
    Z: np.ndarray
    U: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if self.X.shape[0] != self.Z.shape[0]:
            raise DimensionMismatch("states and observations disagree on T")
        if self.U is not None:
            self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
            if self.U.shape[0] != self.X.shape[0] - 1:
                raise DimensionMismatch("controls must have T - 1 rows")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    def save(self, path):
        path = Path(path)
        D, E = self.X.shape[1], self.Z.shape[1]
        U_dim = 0 if self.U is None else self.U.shape[1]
        header = (["t"] + [f"x_{i + 1}" for i in range(D)]
                  + [f"z_{i + 1}" for i in range(E)]
                  + [f"u_{i + 1}" for i in range(U_dim)])
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.T):
                row = [t + 1] + list(self.X[t]) + list(self.Z[t])
                if U_dim:
                    row += list(self.U[t]) if t < self.T - 1 else [0.0] * U_dim
                writer.writerow(row)
        meta = dict(self.meta)
        meta.update({"state_dim": D, "obs_dim": E, "control_dim": U_dim})
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, path) -> "Trajectory":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        D, E, U_dim = meta["state_dim"], meta["obs_dim"], meta["control_dim"]
        rows = []
        with path.open() as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                rows.append([float(v) for v in row[1:]])
        arr = np.asarray(rows)
        X = arr[:, :D]
        Z = arr[:, D:D + E]
        U = arr[:-1, D + E:D + E + U_dim] if U_dim else None
        extra = {k: v for k, v in meta.items()
                 if k not in ("state_dim", "obs_dim", "control_dim")}
        return cls(X, Z, U, extra)


# ---------------------------------------------------------------------------
# sine system

SINE_PROCESS_SD = 0.1
SINE_MEAS_SD = 0.1


def sine_transition(x):
    return 4.0 * np.sin(x)


def simulate_sine(seed: int, T: int, initial_state: float | None = None,
                  process_sd: float = SINE_PROCESS_SD,
                  meas_sd: float = SINE_MEAS_SD) -> Trajectory:
    """Roll out the sine map; x_1 ~ N(0, 1) unless pinned."""
    rng = np.random.default_rng(seed)
    X = np.zeros((T, 1))
    Z = np.zeros((T, 1))
    x = float(rng.standard_normal()) if initial_state is None else float(initial_state)
    for t in range(T):
        if t > 0:
            x = 4.0 * np.sin(x) + process_sd * rng.standard_normal()
        X[t, 0] = x
        Z[t, 0] = 4.0 * np.sin(x) + meas_sd * rng.standard_normal()
    return Trajectory(X, Z, None, {"system": "sine", "seed": int(seed)})


def sine_training_set(seed: int, n: int = 30):
    """n inputs uniform on [-5, 5] with noisy transition/measurement targets."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5.0, 5.0, size=(n, 1))
    Y_trans = 4.0 * np.sin(X[:, 0]) + SINE_PROCESS_SD * rng.standard_normal(n)
    Y_meas = 4.0 * np.sin(X[:, 0]) + SINE_MEAS_SD * rng.standard_normal(n)
    return X, Y_trans[:, None], Y_meas[:, None]


def sine_model(seed: int, n_train: int = 30, fit_iters: int = 200) -> GPDSModel:
    """GP model of the sine system with fitted hyperparameters."""
    X, Yt, Ym = sine_training_set(seed, n_train)
    ht = fit_hyperparameters(X, Yt, default_init(X, Yt), fit_iters)
    hm = fit_hyperparameters(X, Ym, default_init(X, Ym), fit_iters)
    prior = Gaussian(np.zeros(1), np.eye(1))
    return GPDSModel(train(X, Yt, ht), train(X, Ym, hm), prior, control_dim=0)


def sine_parametric() -> ParametricModel:
    """Ground-truth parametric model of the sine system."""
    return ParametricModel(
        transition=lambda x, u=None: 4.0 * np.sin(x),
        transition_jac=lambda x, u=None: np.array([[4.0 * np.cos(x[0])]]),
        Q=np.array([[SINE_PROCESS_SD**2]]),
        measurement=lambda x: 4.0 * np.sin(x),
        measurement_jac=lambda x: np.array([[4.0 * np.cos(x[0])]]),
        R=np.array([[SINE_MEAS_SD**2]]),
        prior=Gaussian(np.zeros(1), np.eye(1)))


# ---------------------------------------------------------------------------
# pendulum system

PEND_MASS = 1.0
PEND_LENGTH = 1.0
PEND_GRAVITY = 9.81
PEND_INERTIA = PEND_MASS * PEND_LENGTH**2 / 3.0
PEND_DT = 0.2
PEND_SUBSTEPS = 50   # halving the substep moves one 200 ms step < 1e-8
PEND_TORQUE_MAX = 2.0
PEND_PROCESS_SD = np.array([0.3, 0.1])
PEND_MEAS_SD = np.array([0.1, 0.05])
PEND_SENSORS = np.array([[-2.0, 0.0], [-0.5, -0.5]])
PEND_PRIOR = Gaussian(np.zeros(2), np.diag([(np.pi / 16.0)**2, 0.5**2]))


def _pend_accel(phi: float, u: float) -> float:
    # angle measured from upright; the equilibrium at phi = 0 is unstable
    return (u - PEND_MASS * PEND_GRAVITY * (PEND_LENGTH / 2.0)
            * np.sin(phi + np.pi)) / PEND_INERTIA


def pendulum_step(state, u: float, dt: float = PEND_DT,
                  substeps: int = PEND_SUBSTEPS) -> np.ndarray:
    """Deterministic RK4 map over one zero-order-hold torque interval."""
    def deriv(s):
        return np.array([s[1], _pend_accel(s[0], u)])

    s = np.asarray(state, dtype=float).copy()
    h = dt / substeps
    for _ in range(substeps):
        k1 = deriv(s)
        k2 = deriv(s + 0.5 * h * k1)
        k3 = deriv(s + 0.5 * h * k2)
        k4 = deriv(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def bearings_measure(phi: float) -> np.ndarray:
    """Noise-free bearings from each sensor to the pendulum tip."""
    tip = np.array([np.cos(phi), np.sin(phi)])
    out = np.zeros(PEND_SENSORS.shape[0])
    for i, (sx, sy) in enumerate(PEND_SENSORS):
        dx, dy = tip[0] - sx, tip[1] - sy
        if dx * dx + dy * dy < 1e-12:
            raise SensorCoincidence(f"sensor {i} coincides with the tip")
        out[i] = np.arctan2(dy, dx)
    return out


def _bearings_jac(state) -> np.ndarray:
    phi = state[0]
    tip = np.array([np.cos(phi), np.sin(phi)])
    J = np.zeros((PEND_SENSORS.shape[0], 2))
    for i, (sx, sy) in enumerate(PEND_SENSORS):
        dx, dy = tip[0] - sx, tip[1] - sy
        # d atan2(dy, dx) / d phi with d(dx)/dphi = -sin, d(dy)/dphi = cos
        J[i, 0] = (dx * np.cos(phi) + dy * np.sin(phi)) / (dx * dx + dy * dy)
    return J


def simulate_pendulum(seed: int, T: int = 20,
                      substeps: int = PEND_SUBSTEPS) -> Trajectory:
    """Rollout with uniform random torques held for each 200 ms step."""
    rng = np.random.default_rng(seed)
    X = np.zeros((T, 2))
    Z = np.zeros((T, 2))
    U = rng.uniform(-PEND_TORQUE_MAX, PEND_TORQUE_MAX, size=(T - 1, 1))
    x = PEND_PRIOR.sample(rng, 1)[0]
    for t in range(T):
        if t > 0:
            x = (pendulum_step(x, U[t - 1, 0], substeps=substeps)
                 + PEND_PROCESS_SD * rng.standard_normal(2))
        X[t] = x
        Z[t] = wrap_to_pi(bearings_measure(x[0])
                          + PEND_MEAS_SD * rng.standard_normal(2))
    return Trajectory(X, Z, U, {"system": "pendulum", "seed": int(seed)})


def pendulum_training_set(seed: int, test: bool = False) -> list:
    """Four training rollouts, or the twelve held-out test rollouts."""
    count = 12 if test else 4
    offset = 1000 if test else 0
    return [simulate_pendulum(seed + offset + k) for k in range(count)]


def _chart_bearings(phi: float) -> np.ndarray:
    """Bearings as a function continuous on the angular chart (-pi, pi].

    A sensor inside the unit tip circle watches the tip revolve around it,
    so its bearing winds once per revolution and atan2 jumps somewhere on
    the chart.  Those dims are relocated onto the branch whose jump sits at
    the chart edge instead, which keeps regression targets continuous in
    the wrapped angle.  Sensors outside the circle never wind.
    """
    z = bearings_measure(phi)
    for i, (sx, sy) in enumerate(PEND_SENSORS):
        if sx * sx + sy * sy < 1.0 and z[i] > _CHART_EDGE_BEARINGS[i]:
            z[i] -= 2.0 * np.pi
    return z


_CHART_EDGE_BEARINGS = bearings_measure(np.pi)


def pendulum_model(seed: int, fit_iters: int = 200) -> GPDSModel:
    """GP model trained on four random rollouts; controls enter the
    transition GP as a third input dimension.

    The angle is treated as periodic.  Training inputs use the wrapped
    angle; transition targets re-express the next state relative to the
    wrapped input (same increment, chart coordinates); measurement targets
    sit on the chart-continuous bearing branch nearest the noise-free
    value.  The smoother undoes the chart shift at prediction time, so
    beliefs may wind past one revolution even though the GPs only ever see
    one chart's worth of inputs.
    """
    trajs = pendulum_training_set(seed, test=False)
    Xt, Yt, Xm, Ym = [], [], [], []
    for tr in trajs:
        for t in range(tr.T - 1):
            phi_w = wrap_to_pi(tr.X[t, 0])
            Xt.append([phi_w, tr.X[t, 1], tr.U[t, 0]])
            Yt.append([phi_w + (tr.X[t + 1, 0] - tr.X[t, 0]), tr.X[t + 1, 1]])
        for t in range(tr.T):
            phi_w = wrap_to_pi(tr.X[t, 0])
            branch = _chart_bearings(phi_w)
            Xm.append([phi_w, tr.X[t, 1]])
            Ym.append(branch + wrap_to_pi(tr.Z[t] - branch))
    Xt, Yt = np.asarray(Xt), np.asarray(Yt)
    Xm, Ym = np.asarray(Xm), np.asarray(Ym)
    ht = fit_hyperparameters(Xt, Yt, default_init(Xt, Yt), fit_iters)
    hm = fit_hyperparameters(Xm, Ym, default_init(Xm, Ym), fit_iters)
    return GPDSModel(train(Xt, Yt, ht), train(Xm, Ym, hm), PEND_PRIOR,
                     control_dim=1, angle_state_dims=(0,),
                     angle_obs_dims=(0, 1))


def pendulum_parametric() -> ParametricModel:
    """Ground-truth parametric pendulum with finite-difference transition
    Jacobian and analytic bearing Jacobian."""
    def trans(x, u):
        torque = 0.0 if u is None else float(np.atleast_1d(u)[0])
        return pendulum_step(x, torque)

    def trans_jac(x, u):
        torque = 0.0 if u is None else float(np.atleast_1d(u)[0])
        return fd_jacobian(lambda s: pendulum_step(s, torque), x)

    return ParametricModel(
        transition=trans,
        transition_jac=trans_jac,
        Q=np.diag(PEND_PROCESS_SD**2),
        measurement=lambda x: bearings_measure(x[0]),
        measurement_jac=_bearings_jac,
        R=np.diag(PEND_MEAS_SD**2),
        prior=PEND_PRIOR,
        control_dim=1,
        angle_obs_dims=(0, 1))
