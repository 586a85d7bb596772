"""Rotation and pose algebra plus the pinhole camera model.

Quaternions are stored scalar-first ``(w, x, y, z)`` and follow the Hamilton
convention. Rotation increments are 3-vectors applied on the right,
``q <- q * exp(delta)``, which is also the local parametrization used by the
solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SMALL_ANGLE = 1e-8
Z_MIN = 1e-6


def skew(v) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def skew_batch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_exp(omega) -> np.ndarray:
    """Unit quaternion of the rotation vector ``omega`` (not canonicalized)."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    if theta < SMALL_ANGLE:
        # second-order Taylor expansion of cos(theta/2), sin(theta/2)/theta
        w = 1.0 - theta * theta / 8.0
        s = 0.5 - theta * theta / 48.0
    else:
        w = math.cos(0.5 * theta)
        s = math.sin(0.5 * theta) / theta
    q = np.array([w, s * omega[0], s * omega[1], s * omega[2]])
    return q / np.linalg.norm(q)


def quat_log(q) -> np.ndarray:
    """Rotation vector of a unit quaternion, angle in ``[0, pi]``."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    v = q[1:]
    s = float(np.linalg.norm(v))
    if s < SMALL_ANGLE:
        return 2.0 * v / q[0]
    theta = 2.0 * math.atan2(s, q[0])
    return theta * v / s


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_matrix_batch(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_left_matrix(q) -> np.ndarray:
    """``L(a) @ b == a * b`` for scalar-first quaternions."""
    w, x, y, z = q
    return np.array([[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]])


def quat_right_matrix(q) -> np.ndarray:
    """``R(b) @ a == a * b`` for scalar-first quaternions."""
    w, x, y, z = q
    return np.array([[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]])


def quat_omega_matrix(omega) -> np.ndarray:
    """4x4 rate matrix acting on vector-first quaternions ``(x, y, z, w)``.

    ``d/dt q = 0.5 * quat_omega_matrix(omega) @ q`` for a body-frame angular
    velocity ``omega``, i.e. ``q(t) = q0 * exp(omega t)``.
    """
    omega = np.asarray(omega, dtype=float)
    m = np.zeros((4, 4))
    m[:3, :3] = -skew(omega)
    m[:3, 3] = omega
    m[3, :3] = -omega
    return m


def so3_right_jacobian(phi) -> np.ndarray:
    """Right Jacobian: ``exp(phi + d) ~= exp(phi) exp(Jr(phi) d)``."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    K = skew(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * K + K @ K / 6.0
    return (np.eye(3) - (1.0 - math.cos(theta)) / theta ** 2 * K
            + (theta - math.sin(theta)) / theta ** 3 * K @ K)


def so3_exp_matrix(omega) -> np.ndarray:
    return quat_to_matrix(quat_exp(omega))


class Rotation:
    """Immutable unit quaternion kept in the ``w >= 0`` hemisphere."""

    __slots__ = ("_q", "_R")

    def __init__(self, q=(1.0, 0.0, 0.0, 0.0)):
        q = quat_normalize(q)
        q.flags.writeable = False
        self._q = q
        self._R = None

    @classmethod
    def identity(cls) -> "Rotation":
        return cls()

    @classmethod
    def from_axis_angle(cls, omega) -> "Rotation":
        return cls(quat_exp(omega))

    @classmethod
    def from_matrix(cls, R) -> "Rotation":
        return cls(matrix_to_quat(R))

    @classmethod
    def from_xyzw(cls, q) -> "Rotation":
        return cls((q[3], q[0], q[1], q[2]))

    @property
    def q(self) -> np.ndarray:
        return self._q

    @property
    def xyzw(self) -> np.ndarray:
        return np.array([self._q[1], self._q[2], self._q[3], self._q[0]])

    @property
    def matrix(self) -> np.ndarray:
        if self._R is None:
            R = quat_to_matrix(self._q)
            R.flags.writeable = False
            self._R = R
        return self._R

    def __mul__(self, other: "Rotation") -> "Rotation":
        return Rotation(quat_multiply(self._q, other._q))

    def inverse(self) -> "Rotation":
        return Rotation(quat_conjugate(self._q))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T

    def axis_angle(self) -> np.ndarray:
        return quat_log(self._q)

    def angle(self) -> float:
        return float(np.linalg.norm(quat_log(self._q)))

    def plus(self, delta) -> "Rotation":
        return Rotation(quat_multiply(self._q, quat_exp(delta)))

    def angle_to(self, other: "Rotation") -> float:
        return (self.inverse() * other).angle()

    def __repr__(self) -> str:
        return "Rotation(w={:.6f}, x={:.6f}, y={:.6f}, z={:.6f})".format(*self._q)


def rotation_from_axis_angle(omega) -> Rotation:
    return Rotation.from_axis_angle(omega)


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> R x + t`` (body to world for tracker states)."""

    rotation: Rotation = field(default_factory=Rotation)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(Rotation.from_matrix(T[:3, :3]), T[:3, 3])

    def __mul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation * other.rotation,
                    self.rotation.apply(other.translation) + self.translation)

    def inverse(self) -> "Pose":
        inv = self.rotation.inverse()
        return Pose(inv, -inv.apply(self.translation))

    def apply(self, points) -> np.ndarray:
        return self.rotation.apply(points) + self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation.matrix
        T[:3, 3] = self.translation
        return T


@dataclass(frozen=True)
class CameraModel:
    """Rectified pinhole camera rigidly attached to the body (IMU) frame.

    ``rotation_cb``/``translation_cb`` map body coordinates into the camera
    frame: ``x_c = R_cb x_b + t_cb``.
    """

    width: int = 640
    height: int = 480
    fx: float = 400.0
    fy: float = 400.0
    cx: float = 320.0
    cy: float = 240.0
    rotation_cb: Rotation = field(default_factory=Rotation)
    translation_cb: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        t = np.array(self.translation_cb, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation_cb", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project_points(self, points_c: np.ndarray):
        """Vectorized projection; returns ``(uv, in_front)``.

        Rows with ``z <= Z_MIN`` get NaN pixel coordinates.
        """
        points_c = np.atleast_2d(np.asarray(points_c, dtype=float))
        z = points_c[:, 2]
        in_front = z > Z_MIN
        uv = np.full((len(points_c), 2), np.nan)
        zi = z[in_front]
        uv[in_front, 0] = self.fx * points_c[in_front, 0] / zi + self.cx
        uv[in_front, 1] = self.fy * points_c[in_front, 1] / zi + self.cy
        return uv, in_front

    def projection_jacobian(self, points_c: np.ndarray) -> np.ndarray:
        """``d(u, v)/d(x, y, z)`` per row, shape ``(n, 2, 3)``."""
        x, y, z = points_c[:, 0], points_c[:, 1], points_c[:, 2]
        iz = 1.0 / z
        J = np.zeros((len(points_c), 2, 3))
        J[:, 0, 0] = self.fx * iz
        J[:, 0, 2] = -self.fx * x * iz * iz
        J[:, 1, 1] = self.fy * iz
        J[:, 1, 2] = -self.fy * y * iz * iz
        return J

    def in_image(self, uv: np.ndarray, margin: float = 1.0) -> np.ndarray:
        """Pixels inside the image, optionally widened about the principal point."""
        u, v = uv[:, 0], uv[:, 1]
        with np.errstate(invalid="ignore"):
            return ((u >= self.cx - margin * self.cx)
                    & (u <= self.cx + margin * (self.width - 1 - self.cx))
                    & (v >= self.cy - margin * self.cy)
                    & (v <= self.cy + margin * (self.height - 1 - self.cy)))


def world_point_to_camera(P, rotation: Rotation, position, camera: CameraModel) -> np.ndarray:
    """``R_cb R^T (P - p) + t_cb`` for one point or an ``(n, 3)`` array."""
    P = np.asarray(P, dtype=float)
    body = (P - np.asarray(position, dtype=float)) @ rotation.matrix
    return body @ camera.rotation_cb.matrix.T + camera.translation_cb


def project(point_c, camera: CameraModel) -> Optional[np.ndarray]:
    """Pixel coordinates of a camera-frame point, or ``None`` if behind the camera."""
    x, y, z = np.asarray(point_c, dtype=float)
    if z <= Z_MIN:
        return None
    return np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])
