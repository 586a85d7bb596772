"""Deterministic simulator: scenes, trajectories, IMU and edge-crossing events.

World frame is gravity aligned (z up). Scenes are laid out on a horizontal
plane above the trajectory, so a camera whose optical axis points along +z
looks at them.

Random numbers come from SplitMix64 (counter based: output ``i`` of stream
``seed`` is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15)`` with the finalizer
constants below), uniforms take the top 53 bits and normals use Box-Muller,
so the streams can be reproduced bit for bit in other languages.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .event_surface import EVENT_DTYPE
from .geometry import CameraModel, Pose, Rotation, Z_MIN, skew_batch
from .map_store import SemiDenseMap
from .preintegration import GRAVITY, FullState, ImuNoiseModel, ImuSample

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """Counter-based 64-bit generator; ``draw(n)`` consumes ``n`` counters."""

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        i = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = self.seed + i * GOLDEN
            z = (z ^ (z >> np.uint64(30))) * MIX1
            z = (z ^ (z >> np.uint64(27))) * MIX2
            return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in ``[0, 1)``."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]


# ---------------------------------------------------------------- scenes

def gen_scene(kind: str, density: float, extent, height: float = 2.0, seed: int = 0,
              center=(0.0, 0.0)) -> SemiDenseMap:
    """Point cloud on the plane ``z = height`` centred on ``center``.

    grid: lattice with spacing ``1 / density`` and ``round(extent * density)``
      points per axis.
    parallel_lines: lines along x, ``density`` points per metre, line
      offsets in y spaced ``spacing = extent_y / n_lines`` with 7 lines.
    random_edges: random straight segments sampled at ``density`` points/m.
    """
    if not density > 0:
        raise ValueError("density must be positive")
    ex, ey = (extent, extent) if np.isscalar(extent) else extent
    cx, cy = center
    if kind == "grid":
        nx = int(round(ex * density))
        ny = int(round(ey * density))
        step = 1.0 / density
        xs = cx + (np.arange(nx) - (nx - 1) / 2.0) * step
        ys = cy + (np.arange(ny) - (ny - 1) / 2.0) * step
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, height)])
    elif kind == "parallel_lines":
        n_lines = 7
        ys = cy + (np.arange(n_lines) - (n_lines - 1) / 2.0) * (ey / n_lines)
        n = int(round(ex * density))
        xs = cx + (np.arange(n) - (n - 1) / 2.0) / density
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, height)])
    elif kind == "random_edges":
        rng = SplitMix64(seed)
        n_seg = max(1, int(round(ex * ey * 2)))
        u = rng.uniform(4 * n_seg).reshape(n_seg, 4)
        starts = np.column_stack([cx + (u[:, 0] - 0.5) * ex, cy + (u[:, 1] - 0.5) * ey])
        ang = 2 * np.pi * u[:, 2]
        length = 0.2 + 0.6 * u[:, 3]
        chunks = []
        for s, a, L in zip(starts, ang, length):
            m = max(2, int(round(L * density)))
            tt = np.linspace(0.0, L, m)
            chunks.append(np.column_stack([s[0] + tt * np.cos(a), s[1] + tt * np.sin(a),
                                           np.full(m, height)]))
        pts = np.vstack(chunks)
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return SemiDenseMap(pts)


# ----------------------------------------------------------- trajectories

@dataclass(frozen=True)
class MotionProfile:
    """Smooth body trajectory.

    Position law by ``kind``; orientation is ``look_at(target)`` (optical
    axis +z towards the target) or a fixed rotation, optionally followed by a
    sinusoidal wobble ``exp(wobble_amplitude * sin(wobble_rate * t))``.
    Everything is evaluated at a warped time whose rate ramps from 1 to
    ``speedup`` (two-phase motion: slow, then ``speedup`` times faster).
    """

    kind: str = "circle"
    amplitude: float = 0.5
    rate: float = 0.5
    duration: float = 10.0
    center: tuple = (0.0, 0.0, 0.0)
    orientation: str = "fixed"
    target: tuple = (0.0, 0.0, 2.0)
    fixed_rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    wobble_amplitude: tuple = (0.0, 0.0, 0.0)
    wobble_rate: tuple = (0.0, 0.0, 0.0)
    speedup: float = 1.0
    speedup_time: float = 0.0
    speedup_ramp: float = 0.5
    waypoints: Optional[tuple] = None
    seed: int = 0


@dataclass(frozen=True)
class TrajectorySample:
    pose: Pose
    velocity: np.ndarray
    acceleration: np.ndarray
    angular_velocity: np.ndarray  # body frame


def _warp(motion: MotionProfile, t):
    """Warped time ``s(t)`` and its first two derivatives.

    The warp rate ramps smoothly (smoothstep) from 1 to ``speedup`` over
    ``speedup_ramp`` seconds starting at ``speedup_time``.
    """
    t = np.asarray(t, dtype=float)
    if motion.speedup == 1.0:
        return t, np.ones_like(t), np.zeros_like(t)
    k = motion.speedup - 1.0
    T = motion.speedup_ramp
    x = np.clip((t - motion.speedup_time) / T, 0.0, 1.0)
    rate = 1 + k * (3 * x ** 2 - 2 * x ** 3)
    drate = np.where((x > 0) & (x < 1), k * (6 * x - 6 * x ** 2) / T, 0.0)
    S = np.where(t <= motion.speedup_time, 0.0,
                 np.where(x < 1, T * (x ** 3 - 0.5 * x ** 4), T * 0.5 + (t - motion.speedup_time - T)))
    return t + k * S, rate, drate


def _position(motion: MotionProfile, s):
    """Position and its first two derivatives with respect to warped time."""
    s = np.asarray(s, dtype=float)
    c = np.asarray(motion.center, dtype=float)
    A = motion.amplitude
    w = motion.rate
    if motion.kind == "circle":
        cos, sin = np.cos(w * s), np.sin(w * s)
        p = np.stack([A * cos, A * sin, 0 * s], -1) + c
        v = np.stack([-A * w * sin, A * w * cos, 0 * s], -1)
        a = np.stack([-A * w * w * cos, -A * w * w * sin, 0 * s], -1)
        return p, v, a
    if motion.kind == "lissajous":
        f = w * np.array([1.0, 2.0, 3.0])
        amp = A * np.array([1.0, 0.5, 0.15])
        arg = s[..., None] * f
        return amp * np.sin(arg) + c, amp * f * np.cos(arg), -amp * f * f * np.sin(arg)
    if motion.kind == "spline":
        cs = _spline(motion)
        return cs(s), cs(s, 1), cs(s, 2)
    raise ValueError(f"unknown trajectory kind {motion.kind!r}")


_SPLINES = {}


def _spline(motion: MotionProfile) -> CubicSpline:
    key = (motion.waypoints, motion.seed, motion.duration, motion.amplitude, motion.center)
    if key not in _SPLINES:
        if motion.waypoints is not None:
            pts = np.asarray(motion.waypoints, dtype=float)
        else:
            rng = SplitMix64(motion.seed)
            n = max(4, int(np.ceil(motion.duration)) + 1)
            pts = (rng.uniform(3 * n).reshape(n, 3) - 0.5) * 2 * motion.amplitude
            pts[:, 2] *= 0.3
            pts += np.asarray(motion.center, dtype=float)
        knots = np.linspace(0.0, motion.duration, len(pts))
        _SPLINES[key] = CubicSpline(knots, pts, axis=0, bc_type="not-a-knot")
    return _SPLINES[key]


def _normalize(u):
    n = np.linalg.norm(u, axis=-1, keepdims=True)
    return u / n, n


def _look_at(p, v, target):
    """Rotation matrices with columns (x, y, z) and body angular velocity."""
    d = np.asarray(target, dtype=float) - p
    z, dn = _normalize(d)
    dz = -(v - z * np.sum(z * v, -1, keepdims=True)) / dn
    ex = np.array([1.0, 0.0, 0.0])
    zx = z[..., 0:1]
    w = ex - zx * z
    dw = -(dz[..., 0:1] * z + zx * dz)
    x, wn = _normalize(w)
    dx = (dw - x * np.sum(x * dw, -1, keepdims=True)) / wn
    y = np.cross(z, x)
    dy = np.cross(dz, x) + np.cross(z, dx)
    R = np.stack([x, y, z], -1)
    dR = np.stack([dx, dy, dz], -1)
    Om = np.swapaxes(R, -1, -2) @ dR
    omega = np.stack([Om[..., 2, 1], Om[..., 0, 2], Om[..., 1, 0]], -1)
    return R, omega


def _exp_batch(phi):
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    K = skew_batch(phi)
    I = np.eye(3)
    small = theta < 1e-8
    th = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(th) / th)
    b = np.where(small, 0.5, (1 - np.cos(th)) / th ** 2)
    return I + a * K + b * K @ K


def _right_jac_batch(phi):
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    K = skew_batch(phi)
    I = np.eye(3)
    small = theta < 1e-5
    th = np.where(small, 1.0, theta)
    a = np.where(small, 0.5, (1 - np.cos(th)) / th ** 2)
    b = np.where(small, 1.0 / 6.0, (th - np.sin(th)) / th ** 3)
    return I - a * K + b * K @ K


def eval_trajectory_batch(motion: MotionProfile, t):
    """Arrays ``(p, R, v, a, omega_body)`` for times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sw, sd, sdd = _warp(motion, t)
    p, dp, ddp = _position(motion, sw)
    v = dp * sd[:, None]
    a = ddp * (sd * sd)[:, None] + dp * sdd[:, None]
    if motion.orientation == "look_at":
        R, omega = _look_at(p, v, motion.target)
    elif motion.orientation == "fixed":
        R = np.broadcast_to(Rotation(motion.fixed_rotation).matrix, (len(t), 3, 3)).copy()
        omega = np.zeros((len(t), 3))
    else:
        raise ValueError(f"unknown orientation law {motion.orientation!r}")
    amp = np.asarray(motion.wobble_amplitude, dtype=float)
    if np.any(amp != 0):
        rate = np.asarray(motion.wobble_rate, dtype=float)
        phi = amp * np.sin(rate * sw[:, None])
        dphi = amp * rate * np.cos(rate * sw[:, None]) * sd[:, None]
        E = _exp_batch(phi)
        ET = np.swapaxes(E, -1, -2)
        omega = (ET @ omega[..., None])[..., 0] + (_right_jac_batch(phi) @ dphi[..., None])[..., 0]
        R = R @ E
    return p, R, v, a, omega


def eval_trajectory(motion: MotionProfile, t: float) -> TrajectorySample:
    if not (-1e-12 <= t <= motion.duration + 1e-12):
        raise ValueError(f"t={t} outside [0, {motion.duration}]")
    p, R, v, a, w = eval_trajectory_batch(motion, t)
    return TrajectorySample(Pose(Rotation.from_matrix(R[0]), p[0]), v[0], a[0], w[0])


def ground_truth_state(motion: MotionProfile, t: float, bias_acc=(0, 0, 0), bias_gyro=(0, 0, 0)) -> FullState:
    s = eval_trajectory(motion, t)
    return FullState(s.pose.rotation, s.pose.translation, s.velocity, bias_acc, bias_gyro, t)


# -------------------------------------------------------------- sensors

@dataclass(frozen=True)
class SimConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    imu_rate: float = 200.0
    imu_noise: Optional[ImuNoiseModel] = None
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    contrast_step: float = 1.0
    event_sim_rate: float = 10000.0
    gravity: tuple = tuple(GRAVITY)
    seed: int = 0

    def __post_init__(self):
        if not self.imu_rate > 0:
            raise ValueError("imu_rate must be positive")
        if not self.contrast_step > 0:
            raise ValueError("contrast_step must be positive")


def imu_times(motion: MotionProfile, sim: SimConfig) -> np.ndarray:
    n = int(np.floor(motion.duration * sim.imu_rate + 1e-9)) + 1
    return np.arange(n) / sim.imu_rate


def gen_imu(motion: MotionProfile, sim: SimConfig) -> list:
    """Accelerometer ``R^T (a - g) + b + n`` and gyro ``omega + b + n`` samples."""
    t = imu_times(motion, sim)
    _, R, _, a, w = eval_trajectory_batch(motion, t)
    g = np.asarray(sim.gravity, dtype=float)
    acc = np.einsum("nji,nj->ni", R, a - g)
    gyro = w.copy()
    n = len(t)
    ba = np.broadcast_to(np.asarray(sim.accel_bias, dtype=float), (n, 3)).copy()
    bg = np.broadcast_to(np.asarray(sim.gyro_bias, dtype=float), (n, 3)).copy()
    if sim.imu_noise is not None:
        nm = sim.imu_noise
        rng = SplitMix64(sim.seed)
        sq = np.sqrt(sim.imu_rate)
        dt = 1.0 / sim.imu_rate
        acc += nm.accel_noise * sq * rng.normal(3 * n).reshape(n, 3)
        gyro += nm.gyro_noise * sq * rng.normal(3 * n).reshape(n, 3)
        ba += np.cumsum(nm.accel_walk * np.sqrt(dt) * rng.normal(3 * n).reshape(n, 3), axis=0)
        bg += np.cumsum(nm.gyro_walk * np.sqrt(dt) * rng.normal(3 * n).reshape(n, 3), axis=0)
    acc += ba
    gyro += bg
    return [ImuSample(float(t[k]), acc[k], gyro[k]) for k in range(n)]


def project_track(motion: MotionProfile, points: np.ndarray, camera: CameraModel, t: np.ndarray):
    """Projections ``(len(t), n_points, 2)`` and a visibility mask."""
    p, R, _, _, _ = eval_trajectory_batch(motion, t)
    # camera-from-world rotation and offset per time step
    M = camera.rotation_cb.matrix @ np.swapaxes(R, -1, -2)
    c = camera.translation_cb - np.einsum("tij,tj->ti", M, p)
    # single precision is ample for sub-millipixel tracks and halves the cost
    X, Y, Z = (points[:, k].astype(np.float32) for k in range(3))
    M = M.astype(np.float32)
    c = c.astype(np.float32)

    def row(i):
        return (M[:, i, 0:1] * X + M[:, i, 1:2] * Y + M[:, i, 2:3] * Z) + c[:, i:i + 1]

    x, y, z = row(0), row(1), row(2)
    front = z > Z_MIN
    iz = 1.0 / np.where(front, z, 1.0)
    uv = np.stack([np.float32(camera.fx) * x * iz + np.float32(camera.cx),
                   np.float32(camera.fy) * y * iz + np.float32(camera.cy)], -1)
    vis = front & (uv[..., 0] >= -0.5) & (uv[..., 0] < camera.width - 0.5) \
        & (uv[..., 1] >= -0.5) & (uv[..., 1] < camera.height - 0.5)
    return uv, vis


def _emit(t, uv, ti, pi, frac, pos, sign):
    ev = np.empty(len(ti), dtype=EVENT_DTYPE)
    ev["t"] = t[ti] + frac * (t[ti + 1] - t[ti])
    ev["u"] = np.rint(pos[:, 0]).astype(np.int32)
    ev["v"] = np.rint(pos[:, 1]).astype(np.int32)
    ev["p"] = sign.astype(np.int8)
    return ev


def _repeat_counts(count):
    """Expand a ``(n_t-1, n_p)`` crossing-count array into per-event indices."""
    ti, pi = np.nonzero(count)
    reps = np.abs(count[ti, pi])
    ti = np.repeat(ti, reps)
    pi = np.repeat(pi, reps)
    first = np.repeat(np.cumsum(reps) - reps, reps)
    return ti, pi, np.arange(len(ti)) - first


def events_from_tracks(t: np.ndarray, uv: np.ndarray, vis: np.ndarray, contrast_step: float,
                       arclen0: Optional[np.ndarray] = None, normals: Optional[np.ndarray] = None):
    """Edge-crossing events from sampled projection tracks.

    ``uv`` has shape ``(len(t), n_points, 2)``. An isolated point fires each
    time its accumulated image-plane path length passes a multiple of
    ``contrast_step``, on the pixel under it, with polarity from the sign of
    the dominant motion axis.

    Points with a nonzero entry in ``normals`` (unit image-plane edge
    normals, ``(n_points, 2)``) lie on an edge. They fire when their
    coordinate along the normal crosses a boundary of the lattice of pitch
    ``contrast_step`` centred on pixel centres, so all points of one edge
    fire together and an edge sliding along itself stays silent.

    Returns the unsorted events, a parallel array of point ids, and the
    final accumulated path length per point.
    """
    n_t, n_p = vis.shape
    ok = vis[1:] & vis[:-1]
    on_edge = np.zeros(n_p, bool) if normals is None else np.any(normals != 0, axis=1)
    s0 = np.zeros(n_p) if arclen0 is None else arclen0.copy()
    d = (uv[1:] - uv[:-1]).astype(float)
    step = np.where(ok & ~on_edge[None, :], np.hypot(d[..., 0], d[..., 1]), 0.0)
    s = s0[None, :] + np.cumsum(step, axis=0)
    s_prev = np.vstack([s0[None, :], s[:-1]])
    k_prev = np.floor(s_prev / contrast_step + 1e-4)
    count = (np.floor(s / contrast_step + 1e-4) - k_prev).astype(np.int64)
    ti, pi, j = _repeat_counts(count)
    level = (k_prev[ti, pi] + j + 1) * contrast_step
    frac = np.clip((level - s_prev[ti, pi]) / np.maximum(step[ti, pi], 1e-300), 0.0, 1.0)
    pos = uv[ti, pi] + frac[:, None] * d[ti, pi]
    dd = d[ti, pi]
    dom = np.where(np.abs(dd[:, 0]) >= np.abs(dd[:, 1]), dd[:, 0], dd[:, 1])
    events = [_emit(t, uv, ti, pi, frac, pos, np.where(dom >= 0, 1, -1))]
    ids = [pi]
    if on_edge.any():
        x = (uv[..., 0] * normals[:, 0] + uv[..., 1] * normals[:, 1]).astype(float) / contrast_step
        cell = np.floor(x + 0.5)
        dk = np.where(ok & on_edge[None, :], cell[1:] - cell[:-1], 0.0).astype(np.int64)
        ti, pi, j = _repeat_counts(dk)
        sign = np.sign(dk[ti, pi])
        boundary = np.where(sign > 0, cell[ti, pi] + j + 0.5, cell[ti, pi] - j - 0.5)
        x0, x1 = x[ti, pi], x[ti + 1, pi]
        frac = np.clip((boundary - x0) / (x1 - x0), 0.0, 1.0)
        pos = uv[ti, pi] + frac[:, None] * d[ti, pi]
        events.append(_emit(t, uv, ti, pi, frac, pos, sign))
        ids.append(pi)
    return np.concatenate(events), np.concatenate(ids), s[-1]


def _padded(camera: CameraModel, pad: int = 150) -> CameraModel:
    return replace(camera, width=camera.width + 2 * pad, height=camera.height + 2 * pad,
                   cx=camera.cx + pad, cy=camera.cy + pad)


def edge_tangents(points: np.ndarray, k: int = 8, anisotropy: float = 10.0) -> np.ndarray:
    """Unit tangent of the local edge through each point, zero for isolated points.

    A point lies on an edge when the principal spread of its ``k`` nearest
    neighbours exceeds the second one by ``anisotropy`` (a variance ratio).
    """
    n = len(points)
    out = np.zeros((n, 3))
    if n < 3:
        return out
    k = min(k, n)
    _, nb = cKDTree(points).query(points, k=k)
    X = points[nb] - points[nb].mean(axis=1, keepdims=True)
    w, V = np.linalg.eigh(np.einsum("nki,nkj->nij", X, X))
    edge = w[:, 2] > anisotropy * np.maximum(w[:, 1], 1e-300)
    out[edge] = V[edge, :, 2]
    return out


def _image_normals(motion, points, tangents, camera, t):
    """Unit image-plane normals of the projected edges at time ``t`` (zero off edges)."""
    eps = 1e-2
    uv, _ = project_track(motion, np.vstack([points, points + eps * tangents]), camera, np.array([t]))
    n = len(points)
    d = (uv[0, n:] - uv[0, :n]).astype(float)
    norm = np.hypot(d[:, 0], d[:, 1])
    good = (np.linalg.norm(tangents, axis=1) > 0) & (norm > 1e-9)
    out = np.zeros((n, 2))
    out[good] = np.column_stack([-d[good, 1], d[good, 0]]) / norm[good, None]
    return out


def gen_events(motion: MotionProfile, scene: SemiDenseMap, sim: SimConfig, chunk: int = 256) -> np.ndarray:
    """Time-sorted events from projected map points (ties broken by point id).

    Points on edges (see :func:`edge_tangents`) fire on normal crossings only.
    """
    pts = scene.points
    tangents = edge_tangents(pts)
    has_edges = bool(np.any(tangents != 0))
    n_steps = int(round(motion.duration * sim.event_sim_rate))
    t_all = np.linspace(0.0, motion.duration, n_steps + 1)
    arclen = np.zeros(len(pts))
    out, ids = [], []
    start = 0
    while start < n_steps:
        stop = min(start + chunk, n_steps)
        t = t_all[start:stop + 1]
        # only points near the view at the chunk ends can fire in between
        _, near = project_track(motion, pts, _padded(sim.camera), t[[0, len(t) // 2, -1]])
        sel = np.nonzero(near.any(axis=0))[0]
        if len(sel):
            uv, vis = project_track(motion, pts[sel], sim.camera, t)
            normals = _image_normals(motion, pts[sel], tangents[sel], sim.camera, t[0]) if has_edges else None
            ev, pid, arc = events_from_tracks(t, uv, vis, sim.contrast_step, arclen[sel], normals)
            arclen[sel] = arc
            out.append(ev)
            ids.append(sel[pid])
        start = stop
    ev = np.concatenate(out) if out else np.empty(0, dtype=EVENT_DTYPE)
    pid = np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)
    inside = (ev["u"] >= 0) & (ev["u"] < sim.camera.width) & (ev["v"] >= 0) & (ev["v"] < sim.camera.height)
    ev, pid = ev[inside], pid[inside]
    order = np.lexsort((pid, ev["t"]))
    return ev[order]


def render_tsm_values(scene: SemiDenseMap, pose: Pose, camera: CameraModel, width_px: float = 2.0):
    """Idealized negated time surface: 0 on projected points, 255 far away.

    Each pixel gets ``255 * (1 - exp(-d^2 / (2 w^2)))`` with ``d`` the distance
    to the nearest projected map point.
    """
    from .geometry import world_point_to_camera

    pc = world_point_to_camera(scene.points, pose.rotation, pose.translation, camera)
    uv, front = camera.project_points(pc)
    uv = uv[front & camera.in_image(uv, 1.2)]
    H, W = camera.height, camera.width
    if len(uv) == 0:
        return np.full((H, W), 255.0)
    grid = np.stack(np.meshgrid(np.arange(W), np.arange(H)), -1).reshape(-1, 2).astype(float)
    d, _ = cKDTree(uv).query(grid, distance_upper_bound=6 * width_px)
    d = np.where(np.isfinite(d), d, np.inf)
    return (255.0 * (1.0 - np.exp(-0.5 * (d / width_px) ** 2))).reshape(H, W)


def with_speedup(motion: MotionProfile, factor: float, at: float, ramp: float = 0.5) -> MotionProfile:
    return replace(motion, speedup=factor, speedup_time=at, speedup_ramp=ramp)


# ----------------------------------------------------------- presets

@dataclass(frozen=True)
class Scenario:
    """A named simulation: trajectory, scene recipe and matching tracker knobs."""

    name: str
    motion: MotionProfile
    scene_kind: str = "grid"
    density: float = 10.0
    extent: float = 5.0
    height: float = 2.0
    sim: SimConfig = field(default_factory=SimConfig)
    n_event: int = 3750
    n_imu: int = 4
    max_iters: int = 20
    intermediate_every: int = 0
    init_frame_count: int = 5

    def scene(self) -> SemiDenseMap:
        return gen_scene(self.scene_kind, self.density, self.extent, self.height, seed=self.sim.seed)

    def initial(self) -> TrajectorySample:
        return eval_trajectory(self.motion, 0.0)


def preset(name: str) -> Scenario:
    """Built-in scenarios: circle, fast, two_phase, parallel_lines, stationary."""
    if name == "circle":
        motion = MotionProfile("circle", amplitude=0.5, rate=0.5, duration=10.0,
                              wobble_amplitude=(0.03, 0.03, 0.05), wobble_rate=(1.3, 1.7, 0.9))
        return Scenario(name, motion, "grid", 10.0, 5.0, n_event=3750, max_iters=20,
                        intermediate_every=3750 // 4, init_frame_count=10)
    if name == "fast":
        # starts gently so the bootstrap can lock on, then runs 4x faster
        motion = MotionProfile("lissajous", amplitude=0.4, rate=0.25, duration=7.5,
                              wobble_amplitude=(0.16, 0.16, 0.32), wobble_rate=(1.75, 2.0, 2.25),
                              speedup=4.0, speedup_time=3.0, speedup_ramp=0.5)
        # keyframes at most every 100 ms: past the TSM memory, so a pose copied
        # from the previous keyframe no longer lands on the edges' decay trails
        return Scenario(name, motion, "grid", 10.0, 6.0, n_event=15000, n_imu=20, max_iters=20,
                        intermediate_every=15000 // 4)
    if name == "two_phase":
        motion = MotionProfile("circle", amplitude=0.5, rate=0.5, duration=8.0,
                              wobble_amplitude=(0.03, 0.03, 0.05), wobble_rate=(1.3, 1.7, 0.9),
                              speedup=4.0, speedup_time=4.0, speedup_ramp=0.5)
        return Scenario(name, motion, "grid", 10.0, 7.0, n_event=4000, max_iters=20)
    if name == "parallel_lines":
        motion = MotionProfile("circle", amplitude=0.3, rate=0.5, duration=3.0,
                              wobble_amplitude=(0.03, 0.0, 0.0), wobble_rate=(1.3, 0.0, 0.0))
        return Scenario(name, motion, "parallel_lines", 400.0, 6.0, n_event=4000, max_iters=20)
    if name == "stationary":
        motion = MotionProfile("circle", amplitude=0.0, rate=0.0, duration=2.0)
        return Scenario(name, motion, "grid", 10.0, 5.0)
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("circle", "fast", "two_phase", "parallel_lines", "stationary")
