"""IMU pre-integration between keyframes and the 15-dimensional inertial residual.

Error-state ordering is ``(d_alpha, d_beta, d_theta, d_ba, d_bg)`` for the
pre-integrated terms. Keyframe states are perturbed in the order of their
fields, ``(d_theta, d_p, d_v, d_ba, d_bg)``, with the rotation increment
applied on the right.

Gravity never enters the pre-integrated terms. The accelerometer model is
``acc = R^T (a_world - g) + b_a + n`` with ``g = (0, 0, -9.81)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Pose, Rotation, quat_exp, quat_multiply, skew, so3_right_jacobian

GRAVITY = np.array([0.0, 0.0, -9.81])

A, B, TH, BA, BG = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)
# state tangent blocks
S_TH, S_P, S_V, S_BA, S_BG = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)

BIAS_WARN = 0.1


class ImuSample(NamedTuple):
    t: float
    acc: np.ndarray
    gyro: np.ndarray


class InsufficientDataError(ValueError):
    pass


class ImuOrderError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class PredictionWarning(UserWarning):
    pass


def stack_samples(samples: Sequence[ImuSample]):
    t = np.array([s.t for s in samples], dtype=float)
    acc = np.array([s.acc for s in samples], dtype=float).reshape(-1, 3)
    gyro = np.array([s.gyro for s in samples], dtype=float).reshape(-1, 3)
    return t, acc, gyro


@dataclass(frozen=True)
class ImuNoiseModel:
    """Continuous-time noise densities.

    accel_noise: m/s^2/sqrt(Hz); gyro_noise: rad/s/sqrt(Hz);
    accel_walk: m/s^3/sqrt(Hz); gyro_walk: rad/s^2/sqrt(Hz).
    """

    accel_noise: float = 2.0e-3
    gyro_noise: float = 1.7e-4
    accel_walk: float = 1.0e-4
    gyro_walk: float = 1.0e-5
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in ("accel_noise", "gyro_noise", "accel_walk", "gyro_walk"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        g = np.array(self.gravity, dtype=float).reshape(3)
        g.flags.writeable = False
        object.__setattr__(self, "gravity", g)


@dataclass(frozen=True)
class FullState:
    rotation: Rotation = field(default_factory=Rotation)
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "bias_acc", "bias_gyro"):
            a = np.array(getattr(self, name), dtype=float).reshape(3)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.position)

    def plus(self, delta) -> "FullState":
        delta = np.asarray(delta, dtype=float)
        return replace(
            self,
            rotation=self.rotation.plus(delta[S_TH]),
            position=self.position + delta[S_P],
            velocity=self.velocity + delta[S_V],
            bias_acc=self.bias_acc + delta[S_BA],
            bias_gyro=self.bias_gyro + delta[S_BG],
        )

    def with_pose(self, pose: Pose) -> "FullState":
        return replace(self, rotation=pose.rotation, position=pose.translation)


@dataclass(frozen=True, eq=False)
class Preintegration:
    dt: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: Rotation
    covariance: np.ndarray
    jacobian: np.ndarray
    bias_acc: np.ndarray
    bias_gyro: np.ndarray
    t_start: float
    t_end: float
    samples: tuple = ()
    noise: ImuNoiseModel = field(default_factory=ImuNoiseModel)

    @property
    def J_alpha_ba(self):
        return self.jacobian[A, BA]

    @property
    def J_alpha_bg(self):
        return self.jacobian[A, BG]

    @property
    def J_beta_ba(self):
        return self.jacobian[B, BA]

    @property
    def J_beta_bg(self):
        return self.jacobian[B, BG]

    @property
    def J_gamma_bg(self):
        return self.jacobian[TH, BG]

    def corrected(self, bias_acc, bias_gyro):
        return bias_corrected_terms(self, (bias_acc, bias_gyro))

    def repropagate(self, bias_acc, bias_gyro) -> "Preintegration":
        return preintegrate(self.samples, (bias_acc, bias_gyro), self.noise)

    def sqrt_information(self) -> np.ndarray:
        """Upper-triangular ``L`` with ``L^T L = inv(covariance)``."""
        info = np.linalg.inv(self.covariance)
        info = 0.5 * (info + info.T)
        return np.linalg.cholesky(info).T


def empty_preintegration(t: float, bias=(np.zeros(3), np.zeros(3)),
                         noise: ImuNoiseModel = ImuNoiseModel()) -> Preintegration:
    return Preintegration(0.0, np.zeros(3), np.zeros(3), Rotation(), np.zeros((15, 15)),
                          np.eye(15), np.asarray(bias[0], float), np.asarray(bias[1], float),
                          t, t, (), noise)


def preintegrate(samples: Sequence[ImuSample], bias=(np.zeros(3), np.zeros(3)),
                 noise: ImuNoiseModel = ImuNoiseModel()) -> Preintegration:
    """Midpoint pre-integration of raw samples with covariance and bias Jacobians."""
    samples = tuple(samples)
    if len(samples) < 2:
        raise InsufficientDataError("pre-integration needs at least two IMU samples")
    t, acc, gyro = stack_samples(samples)
    if np.any(np.diff(t) <= 0):
        raise ImuOrderError("IMU timestamps must be strictly increasing")
    ba = np.asarray(bias[0], dtype=float).reshape(3)
    bg = np.asarray(bias[1], dtype=float).reshape(3)

    alpha = np.zeros(3)
    beta = np.zeros(3)
    q = np.array([1.0, 0.0, 0.0, 0.0])
    R0 = np.eye(3)
    P = np.zeros((15, 15))
    J = np.eye(15)
    I3 = np.eye(3)
    na2, ng2 = noise.accel_noise ** 2, noise.gyro_noise ** 2
    wa2, wg2 = noise.accel_walk ** 2, noise.gyro_walk ** 2
    total = 0.0

    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        a0 = acc[k] - ba
        a1 = acc[k + 1] - ba
        w = 0.5 * (gyro[k] + gyro[k + 1]) - bg
        q1 = quat_multiply(q, quat_exp(w * dt))
        q1 /= np.linalg.norm(q1)
        R1 = _rot(q1)
        a_mid = 0.5 * (R0 @ a0 + R1 @ a1)
        alpha_next = alpha + beta * dt + 0.5 * a_mid * dt * dt
        beta_next = beta + a_mid * dt

        S0 = R0 @ skew(a0)
        S1 = R1 @ skew(a1)
        # exact error-state propagation of the right-multiplied rotation step
        Wr = _rot(quat_exp(w * dt)).T
        Jr = so3_right_jacobian(w * dt)
        F = np.eye(15)
        F[A, B] = I3 * dt
        F[A, TH] = -0.25 * (S0 + S1 @ Wr) * dt * dt
        F[A, BA] = -0.25 * (R0 + R1) * dt * dt
        F[A, BG] = 0.25 * S1 @ Jr * dt * dt * dt
        F[B, TH] = -0.5 * (S0 + S1 @ Wr) * dt
        F[B, BA] = -0.5 * (R0 + R1) * dt
        F[B, BG] = 0.5 * S1 @ Jr * dt * dt
        F[TH, TH] = Wr
        F[TH, BG] = -Jr * dt

        # noise inputs: n_a0, n_g0, n_a1, n_g1, n_ba, n_bg
        V = np.zeros((15, 18))
        V[A, 0:3] = 0.25 * R0 * dt * dt
        V[A, 3:6] = -0.125 * S1 * dt * dt * dt
        V[A, 6:9] = 0.25 * R1 * dt * dt
        V[A, 9:12] = V[A, 3:6]
        V[B, 0:3] = 0.5 * R0 * dt
        V[B, 3:6] = -0.25 * S1 * dt * dt
        V[B, 6:9] = 0.5 * R1 * dt
        V[B, 9:12] = V[B, 3:6]
        V[TH, 3:6] = 0.5 * I3 * dt
        V[TH, 9:12] = 0.5 * I3 * dt
        V[BA, 12:15] = I3 * dt
        V[BG, 15:18] = I3 * dt
        # densities converted to per-sample variances over this interval
        qd = np.repeat([na2, ng2, na2, ng2, wa2, wg2], 3) / dt

        P = F @ P @ F.T + (V * qd) @ V.T
        J = F @ J
        alpha, beta, q, R0 = alpha_next, beta_next, q1, R1
        total += dt

    P = 0.5 * (P + P.T)
    for arr in (alpha, beta, P, J):
        arr.flags.writeable = False
    return Preintegration(total, alpha, beta, Rotation(q), P, J, ba, bg,
                          float(t[0]), float(t[-1]), samples, noise)


def _rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def bias_corrected_terms(pre: Preintegration, new_bias):
    """First-order bias correction of ``(alpha, beta, gamma)`` about the linearization bias."""
    dba = np.asarray(new_bias[0], dtype=float) - pre.bias_acc
    dbg = np.asarray(new_bias[1], dtype=float) - pre.bias_gyro
    if np.linalg.norm(dba) > BIAS_WARN or np.linalg.norm(dbg) > BIAS_WARN:
        warnings.warn("bias moved far from the linearization point; re-propagate", RuntimeWarning)
    alpha = pre.alpha + pre.J_alpha_ba @ dba + pre.J_alpha_bg @ dbg
    beta = pre.beta + pre.J_beta_ba @ dba + pre.J_beta_bg @ dbg
    gamma = pre.gamma.plus(pre.J_gamma_bg @ dbg)
    return alpha, beta, gamma


class ImuResidual(NamedTuple):
    residual: np.ndarray       # whitened, 15
    raw: np.ndarray            # unwhitened, 15
    sqrt_info: np.ndarray      # 15x15
    jac_i: np.ndarray          # d residual / d state_i tangent, whitened
    jac_j: np.ndarray


def imu_residual(si: FullState, sj: FullState, pre: Preintegration,
                 noise: ImuNoiseModel = ImuNoiseModel(), sqrt_info=None,
                 dt_tol: float = 1e-6) -> ImuResidual:
    """Inertial residual between consecutive keyframe states with analytic Jacobians.

    Rows: position, velocity, rotation, accel-bias walk, gyro-bias walk.
    """
    dt = pre.dt
    if abs((sj.t - si.t) - dt) > dt_tol:
        raise ConsistencyError(
            f"pre-integration spans {dt:.9f} s but states are {sj.t - si.t:.9f} s apart")
    g = noise.gravity
    Ri = si.rotation.matrix
    RiT = Ri.T
    dba = si.bias_acc - pre.bias_acc
    dbg = si.bias_gyro - pre.bias_gyro
    phi = pre.J_gamma_bg @ dbg
    alpha = pre.alpha + pre.J_alpha_ba @ dba + pre.J_alpha_bg @ dbg
    beta = pre.beta + pre.J_beta_ba @ dba + pre.J_beta_bg @ dbg
    gamma_q = quat_multiply(pre.gamma.q, quat_exp(phi))

    dp_w = sj.position - si.position - 0.5 * g * dt * dt - si.velocity * dt
    dv_w = sj.velocity - g * dt - si.velocity
    r = np.empty(15)
    r[0:3] = RiT @ dp_w - alpha
    r[3:6] = RiT @ dv_w - beta
    qi_inv = np.array([si.rotation.q[0], *(-si.rotation.q[1:])])
    g_inv = np.array([gamma_q[0], *(-gamma_q[1:])])
    E = quat_multiply(quat_multiply(qi_inv, sj.rotation.q), g_inv)
    r[6:9] = 2.0 * E[1:]
    r[9:12] = sj.bias_acc - si.bias_acc
    r[12:15] = sj.bias_gyro - si.bias_gyro

    Ji = np.zeros((15, 15))
    Jj = np.zeros((15, 15))
    I3 = np.eye(3)
    Ji[0:3, S_TH] = skew(RiT @ dp_w)
    Ji[0:3, S_P] = -RiT
    Ji[0:3, S_V] = -RiT * dt
    Ji[0:3, S_BA] = -pre.J_alpha_ba
    Ji[0:3, S_BG] = -pre.J_alpha_bg
    Jj[0:3, S_P] = RiT

    Ji[3:6, S_TH] = skew(RiT @ dv_w)
    Ji[3:6, S_V] = -RiT
    Ji[3:6, S_BA] = -pre.J_beta_ba
    Ji[3:6, S_BG] = -pre.J_beta_bg
    Jj[3:6, S_V] = RiT

    w_e, v_e = E[0], E[1:]
    R_gamma = _rot(gamma_q)
    left = w_e * I3 + skew(v_e)
    Ji[6:9, S_TH] = -(w_e * I3 - skew(v_e))
    Jj[6:9, S_TH] = left @ R_gamma
    Ji[6:9, S_BG] = -left @ R_gamma @ so3_right_jacobian(phi) @ pre.J_gamma_bg

    Ji[9:12, S_BA] = -I3
    Jj[9:12, S_BA] = I3
    Ji[12:15, S_BG] = -I3
    Jj[12:15, S_BG] = I3

    L = pre.sqrt_information() if sqrt_info is None else sqrt_info
    return ImuResidual(L @ r, r, L, L @ Ji, L @ Jj)


def predict(state: FullState, samples: Sequence[ImuSample],
            noise: ImuNoiseModel = ImuNoiseModel()) -> FullState:
    """Forward-integrate raw IMU from ``state`` to the last sample time, gravity included."""
    samples = list(samples)
    if len(samples) == 0:
        warnings.warn("no IMU samples to propagate with", PredictionWarning)
        return state
    t, acc, gyro = stack_samples(samples)
    if abs(t[0] - state.t) > 1e-6 and t[0] < state.t:
        raise ImuOrderError("prediction samples start before the state time")
    g = noise.gravity
    ba, bg = state.bias_acc, state.bias_gyro
    q = state.rotation.q.copy()
    R0 = state.rotation.matrix
    p = state.position.copy()
    v = state.velocity.copy()
    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        w = 0.5 * (gyro[k] + gyro[k + 1]) - bg
        q = quat_multiply(q, quat_exp(w * dt))
        q /= np.linalg.norm(q)
        R1 = _rot(q)
        a = 0.5 * (R0 @ (acc[k] - ba) + R1 @ (acc[k + 1] - ba)) + g
        p = p + v * dt + 0.5 * a * dt * dt
        v = v + a * dt
        R0 = R1
    return replace(state, rotation=Rotation(q), position=p, velocity=v, t=float(t[-1]))
