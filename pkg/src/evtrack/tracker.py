"""Map-based event-inertial tracking.

Three estimators share the solver:

* single-frame localization of a pose against one time-surface map,
* loosely-coupled bootstrapping of velocities and biases with poses held fixed,
* the sliding-window problem over the last ``N`` keyframes, with event terms
  on every keyframe and inertial terms between neighbours.

Each keyframe is two parameter blocks: the pose ``[q_wxyz, p]`` (6-dim local
increment ``(d_theta, d_p)``) and the speed-bias block ``[v, b_a, b_g]``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional

import numpy as np

from .event_surface import MAX_VALUE, TimeSurfaceMap, TsmConfig
from .frames import FrameBundle, Keyframe, KeyframeBuilder
from .geometry import (CameraModel, Pose, Rotation, quat_exp, quat_multiply, quat_normalize,
                       quat_to_matrix)
from .map_store import SemiDenseMap, frustum_mask, refresh_active_set, sample_points
from .preintegration import (FullState, ImuNoiseModel, Preintegration, imu_residual, predict,
                             preintegrate)
from .solver import (ParameterBlock, Problem, RobustLoss, SolverOptions, SolverReport, marginal_information,
                     robust_weight, solve)

log = logging.getLogger(__name__)

MOTION_MODELS = ("zeroth", "first", "second")


class InsufficientOverlapError(RuntimeError):
    pass


class InitializationError(RuntimeError):
    """Bootstrapping failed; the caller should slide its buffer and retry."""


@dataclass(frozen=True)
class TrackerConfig:
    window_size: int = 5
    motion_model: str = "second"
    init_frame_count: int = 5
    sample_size: int = 1500
    huber_scale: float = 10.0
    margin_factor: float = 1.3
    fix_first: str = "full"          # or "pose"
    min_overlap: int = 30
    divergence_factor: float = 10.0
    relocalize_huber_scale: float = 30.0
    max_iters: int = 10
    single_max_iters: int = 30
    min_support: float = 1.0
    init_max_cost: float = 1e8
    init_max_bias_acc: float = 1.0
    init_max_bias_gyro: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.init_frame_count < 3:
            raise ValueError("init_frame_count must be >= 3")
        if self.motion_model not in MOTION_MODELS:
            raise ValueError(f"motion_model must be one of {MOTION_MODELS}")
        if self.fix_first not in ("full", "pose"):
            raise ValueError("fix_first must be 'full' or 'pose'")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not self.huber_scale > 0:
            raise ValueError("huber_scale must be positive")
        if self.margin_factor < 1:
            raise ValueError("margin_factor must be >= 1")

    def solver_options(self, single: bool = False) -> SolverOptions:
        return SolverOptions(max_iters=self.single_max_iters if single else self.max_iters,
                             grad_tol=1e-8, step_tol=1e-9, initial_damping=1e-4)


# ------------------------------------------------------------ parametrization

def pose_vector(rotation: Rotation, position) -> np.ndarray:
    return np.concatenate([rotation.q, np.asarray(position, dtype=float)])


def pose_plus(x, d):
    q = quat_normalize(quat_multiply(x[:4], quat_exp(d[:3])))
    return np.concatenate([q, x[4:7] + d[3:6]])


def speed_bias_vector(state: FullState) -> np.ndarray:
    return np.concatenate([state.velocity, state.bias_acc, state.bias_gyro])


def state_from_vectors(pose: np.ndarray, sb: np.ndarray, t: float) -> FullState:
    return FullState(Rotation(pose[:4]), pose[4:7], sb[0:3], sb[3:6], sb[6:9], t)


# ------------------------------------------------------------ event residual

def event_residuals(tsm: TimeSurfaceMap, points: np.ndarray, x: np.ndarray, camera: CameraModel,
                    jacobian: bool = True):
    """TSM values at the projections of ``points`` under pose vector ``x``.

    Returns ``(r, J, visible)``; invisible points score ``MAX_VALUE`` with a
    zero Jacobian row. ``J`` is ``(n, 6)`` over ``(d_theta, d_p)``.
    """
    R = quat_to_matrix(x[:4])
    Rcb = camera.rotation_cb.matrix
    Pb = (points - x[4:7]) @ R
    Pc = Pb @ Rcb.T + camera.translation_cb
    uv, front = camera.project_points(Pc)
    r, ok = tsm.sample_many(uv)
    ok &= front
    r[~ok] = MAX_VALUE
    if not jacobian:
        return r, None, ok
    J = np.zeros((len(points), 6))
    if np.any(ok):
        G = tsm.gradient_many(uv[ok])
        Jp = camera.projection_jacobian(Pc[ok])
        gP = np.einsum("ni,nij->nj", G, Jp)        # d r / d Pc
        gB = gP @ Rcb                               # d r / d Pb
        J[ok, 0:3] = np.cross(gB, Pb[ok])
        J[ok, 3:6] = -gB @ R.T
    return r, J, ok


def _event_func(tsm, points, camera):
    def f(x):
        r, J, _ = event_residuals(tsm, points, x, camera)
        return r, [J]
    return f


def edge_support(tsm: TimeSurfaceMap, points: np.ndarray, x: np.ndarray, camera: CameraModel):
    """``(support, n)``: mean of ``255 - value`` over the points in view.

    Zero means no projected point touches a recent edge. Loss detection
    compares this against its running median, so a tenfold drop in support
    plays the role of a tenfold cost increase.
    """
    r, _, ok = event_residuals(tsm, points, x, camera, jacobian=False)
    n = int(np.count_nonzero(ok))
    if n == 0:
        return 0.0, 0
    return float(np.mean(MAX_VALUE - r[ok])), n


def count_visible(points: np.ndarray, pose: Pose, camera: CameraModel) -> int:
    return int(np.count_nonzero(frustum_mask(points, pose, camera, 1.0, z_near=1e-6, z_far=np.inf)))


@dataclass
class LocalizationResult:
    pose: Pose
    cost: float
    initial_cost: float
    n_visible: int
    report: SolverReport


def localize_single_frame(tsm: TimeSurfaceMap, points: np.ndarray, initial_pose: Pose,
                          camera: CameraModel, cfg: TrackerConfig = TrackerConfig(),
                          huber_scale: Optional[float] = None) -> LocalizationResult:
    """Event-only pose refinement against one TSM."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n_vis = count_visible(points, initial_pose, camera)
    if n_vis < cfg.min_overlap:
        raise InsufficientOverlapError(f"only {n_vis} map points in view (need {cfg.min_overlap})")
    prob = Problem()
    blk = prob.add_parameter_block(ParameterBlock(pose_vector(initial_pose.rotation, initial_pose.translation),
                                                  6, pose_plus, name="pose"))
    loss = RobustLoss("huber", huber_scale or cfg.huber_scale)
    prob.add_residual_block(_event_func(tsm, points, camera), [blk], loss, per_row_loss=True, name="events")
    rep = solve(prob, cfg.solver_options(single=True))
    pose = Pose(Rotation(blk.value[:4]), blk.value[4:7])
    return LocalizationResult(pose, rep.final_cost, rep.initial_cost, count_visible(points, pose, camera), rep)


def event_hessian(tsm: TimeSurfaceMap, points: np.ndarray, pose: Pose, camera: CameraModel,
                  huber_scale: float = 10.0) -> np.ndarray:
    """Gauss-Newton information of the single-frame event cost at ``pose`` (6x6)."""
    prob = Problem()
    blk = prob.add_parameter_block(ParameterBlock(pose_vector(pose.rotation, pose.translation), 6, pose_plus))
    prob.add_residual_block(_event_func(tsm, points, camera), [blk], RobustLoss("huber", huber_scale),
                            per_row_loss=True)
    H, _, _ = prob.linearize()
    return H


def eigen_ratio(H: np.ndarray, depth: float = 1.0) -> float:
    """``min/max`` eigenvalue of a pose information matrix.

    Translation is expressed in units of ``depth`` so that unit steps in
    rotation and translation move image points by comparable amounts.
    """
    s = np.array([1, 1, 1, depth, depth, depth], dtype=float)
    w = np.linalg.eigvalsh(H * np.outer(s, s))
    return float(max(w[0], 0.0) / w[-1])


def window_pose_information(window: "SlidingWindow", points: np.ndarray, camera: CameraModel,
                            cfg: TrackerConfig = TrackerConfig(),
                            noise: ImuNoiseModel = ImuNoiseModel()) -> np.ndarray:
    """6x6 information of the newest pose in the joint windowed problem, all other states marginalized."""
    prob, poses, _, _ = build_window_problem(window, points, camera, cfg, noise)
    return marginal_information(prob, poses[-1])


# ------------------------------------------------------------ IMU factor glue

def _imu_func(pre: Preintegration, noise: ImuNoiseModel, t_i: float, t_j: float):
    L = pre.sqrt_information()

    def f(pi, sbi, pj, sbj):
        si = state_from_vectors(pi, sbi, t_i)
        sj = state_from_vectors(pj, sbj, t_j)
        res = imu_residual(si, sj, pre, noise, sqrt_info=L)
        return res.residual, [res.jac_i[:, :6], res.jac_i[:, 6:], res.jac_j[:, :6], res.jac_j[:, 6:]]
    return f


# ------------------------------------------------------------ initialization

@dataclass
class InitResult:
    states: List[FullState]
    preintegrations: List[Optional[Preintegration]]
    report: SolverReport
    repropagation_change: float = 0.0   # max raw residual change from the final re-integration


def initialize(states: List[FullState], preintegrations: List[Optional[Preintegration]],
               noise: ImuNoiseModel = ImuNoiseModel(), cfg: TrackerConfig = TrackerConfig(),
               passes: int = 3, bias_tol: float = 1e-7) -> InitResult:
    """Estimate velocities and biases with the poses held at their vision-only values.

    ``preintegrations[i]`` links ``states[i-1]`` to ``states[i]`` (entry 0 is
    ignored). After each solve every span is re-integrated at the optimized
    bias of its start node and the solve is repeated, up to ``passes`` times
    or until no bias moves by more than ``bias_tol``.
    """
    n = len(states)
    if n < 3:
        raise ValueError(f"initialization needs at least 3 frames, got {n}")
    if any(p is None for p in preintegrations[1:]):
        raise ValueError("every frame after the first needs a pre-integration")
    pres = list(preintegrations)
    guess = list(states)
    rep = None
    change = np.inf
    for _ in range(max(1, passes)):
        guess, rep = _inertial_alignment(guess, states, pres, noise, cfg)
        moved = 0.0
        change = 0.0
        for k in range(1, n):
            s0, s1 = guess[k - 1], guess[k]
            moved = max(moved, np.abs(s0.bias_acc - pres[k].bias_acc).max(),
                        np.abs(s0.bias_gyro - pres[k].bias_gyro).max())
            before = imu_residual(s0, s1, pres[k], noise).raw
            pres[k] = pres[k].repropagate(s0.bias_acc, s0.bias_gyro)
            change = max(change, float(np.abs(imu_residual(s0, s1, pres[k], noise).raw - before).max()))
        if moved <= bias_tol:
            break
    return InitResult(guess, pres, rep, change)


def _inertial_alignment(guess, states, pres, noise, cfg):
    n = len(states)
    prob = Problem()
    pose_blocks, sb_blocks = [], []
    for k, s in enumerate(states):
        pb = prob.add_parameter_block(ParameterBlock(pose_vector(s.rotation, s.position), 6, pose_plus,
                                                     fixed=True, name=f"pose{k}"))
        g = guess[k]
        if g is s:
            # rough velocity from neighbouring positions
            a, b = max(k - 1, 0), min(k + 1, n - 1)
            v0 = (states[b].position - states[a].position) / max(states[b].t - states[a].t, 1e-9)
        else:
            v0 = g.velocity
        sb = prob.add_parameter_block(ParameterBlock(np.concatenate([v0, g.bias_acc, g.bias_gyro]),
                                                     name=f"speed_bias{k}"))
        pose_blocks.append(pb)
        sb_blocks.append(sb)
    for k in range(1, n):
        prob.add_residual_block(_imu_func(pres[k], noise, states[k - 1].t, states[k].t),
                                [pose_blocks[k - 1], sb_blocks[k - 1], pose_blocks[k], sb_blocks[k]],
                                name=f"imu{k}")
    rep = solve(prob, SolverOptions(max_iters=30, grad_tol=1e-12, step_tol=1e-12, initial_damping=1e-8))
    per_factor = 2 * rep.final_cost / (n - 1)
    if not np.isfinite(per_factor) or per_factor > cfg.init_max_cost:
        raise InitializationError(f"inertial alignment residual too large ({per_factor:.3g} per factor)")
    out = [state_from_vectors(pose_blocks[k].value, sb_blocks[k].value, states[k].t) for k in range(n)]
    ba = max(np.linalg.norm(s.bias_acc) for s in out)
    bg = max(np.linalg.norm(s.bias_gyro) for s in out)
    if ba > cfg.init_max_bias_acc or bg > cfg.init_max_bias_gyro:
        raise InitializationError(f"implausible biases (|b_a| {ba:.3g}, |b_g| {bg:.3g})")
    return out, rep


# ------------------------------------------------------------ sliding window

@dataclass
class WindowNode:
    t: float
    tsm: TimeSurfaceMap
    pre: Optional[Preintegration]   # from the previous node
    state: FullState
    index: int = 0


@dataclass
class SlidingWindow:
    nodes: List[WindowNode] = field(default_factory=list)
    size: int = 5
    visible: Optional[np.ndarray] = None      # map indices in view after the last solve

    @property
    def full(self) -> bool:
        return len(self.nodes) >= self.size

    def push(self, node: WindowNode) -> None:
        self.nodes.append(node)
        while len(self.nodes) > self.size:
            self.nodes.pop(0)


def predict_state(window: SlidingWindow, kf: Keyframe, model: str, noise: ImuNoiseModel) -> FullState:
    last = window.nodes[-1].state
    if model == "second" and len(kf.imu) >= 2:
        s = predict(last, kf.imu, noise)
        return replace(s, t=kf.t)
    if model == "first" and len(window.nodes) >= 2:
        prev = window.nodes[-2].state
        rel = prev.pose.inverse() * last.pose
        pose = last.pose * rel
        return FullState(pose.rotation, pose.translation, last.velocity, last.bias_acc, last.bias_gyro, kf.t)
    return replace(last, t=kf.t)


@dataclass
class TrackResult:
    state: FullState
    lost: bool
    reason: str = ""
    cost: float = 0.0
    support: float = 0.0
    n_visible: int = 0
    report: Optional[SolverReport] = None


def build_window_problem(window: SlidingWindow, points: np.ndarray, camera: CameraModel,
                         cfg: TrackerConfig, noise: ImuNoiseModel):
    """Joint problem over the window; returns ``(problem, pose_blocks, sb_blocks, event_blocks)``."""
    prob = Problem()
    loss = RobustLoss("huber", cfg.huber_scale)
    poses, sbs, evs = [], [], []
    anchor = window.full
    for k, node in enumerate(window.nodes):
        fix_pose = anchor and k == 0
        fix_sb = fix_pose and cfg.fix_first == "full"
        pb = prob.add_parameter_block(ParameterBlock(pose_vector(node.state.rotation, node.state.position), 6,
                                                     pose_plus, fixed=fix_pose, name=f"pose{node.index}"))
        sb = prob.add_parameter_block(ParameterBlock(speed_bias_vector(node.state), fixed=fix_sb,
                                                     name=f"speed_bias{node.index}"))
        poses.append(pb)
        sbs.append(sb)
        evs.append(prob.add_residual_block(_event_func(node.tsm, points, camera), [pb], loss,
                                           per_row_loss=True, name=f"events{node.index}"))
    for k in range(1, len(window.nodes)):
        node, prev = window.nodes[k], window.nodes[k - 1]
        prob.add_residual_block(_imu_func(node.pre, noise, prev.t, node.t),
                                [poses[k - 1], sbs[k - 1], poses[k], sbs[k]], name=f"imu{node.index}")
    return prob, poses, sbs, evs


def track_keyframe(window: SlidingWindow, kf: Keyframe, smap: SemiDenseMap, camera: CameraModel,
                   cfg: TrackerConfig = TrackerConfig(), noise: ImuNoiseModel = ImuNoiseModel(),
                   reference_support: Optional[float] = None) -> TrackResult:
    """Predict, add ``kf`` to the window, solve and slide. ``window`` is updated in place.

    On loss the window is left untouched and the returned state is the last
    good one.
    """
    last = window.nodes[-1].state
    pred = predict_state(window, kf, cfg.motion_model, noise)
    n_pred = count_visible(smap.points, pred.pose, camera)
    if n_pred < cfg.min_overlap:
        return TrackResult(last, True, f"insufficient overlap ({n_pred} points)")
    active = refresh_active_set(smap, pred.pose, camera, cfg.margin_factor, window.visible, kf.index)
    idx = sample_points(active, cfg.sample_size, cfg.seed + kf.index)
    points = smap.points[idx]

    pre = kf.pre_from_prev
    if pre is None:
        return TrackResult(last, True, "keyframe lacks a pre-integration")
    trial = SlidingWindow(list(window.nodes), window.size, window.visible)
    trial.push(WindowNode(kf.t, kf.tsm, pre, pred, kf.index))
    prob, poses, sbs, evs = build_window_problem(trial, points, camera, cfg, noise)
    rep = solve(prob, cfg.solver_options())
    newest = state_from_vectors(poses[-1].value, sbs[-1].value, kf.t)
    support, n_vis = edge_support(kf.tsm, points, poses[-1].value, camera)
    if n_vis < cfg.min_overlap:
        return TrackResult(last, True, f"insufficient overlap after solve ({n_vis} points)", rep.final_cost,
                           support, n_vis, rep)
    if support < cfg.min_support:
        return TrackResult(last, True, f"no edge support ({support:.2f})", rep.final_cost, support, n_vis, rep)
    if reference_support is not None and support * cfg.divergence_factor < reference_support:
        return TrackResult(last, True, f"divergence (edge support {support:.2f} vs {reference_support:.2f})",
                           rep.final_cost, support, n_vis, rep)
    for k, node in enumerate(trial.nodes):
        trial.nodes[k] = replace(node, state=state_from_vectors(poses[k].value, sbs[k].value, node.t))
    window.nodes = trial.nodes
    window.visible = active.indices[frustum_mask(smap.points[active.indices], newest.pose, camera, 1.0)]
    return TrackResult(newest, False, "", rep.final_cost, support, n_vis, rep)


# ------------------------------------------------------------ full run

@dataclass
class StateRecord:
    t: float
    state: FullState
    lost: bool = False
    phase: str = "track"


@dataclass
class RunStats:
    keyframes: int = 0
    init_attempts: int = 0
    init_time: Optional[float] = None
    lost_events: int = 0
    relocalized: int = 0
    lost_at: List[float] = field(default_factory=list)
    timings: dict = field(default_factory=lambda: {"keyframes": 0.0, "init": 0.0, "tracking": 0.0})


class Tracker:
    """State machine: bootstrap, then windowed tracking, with loss handling."""

    def __init__(self, smap: SemiDenseMap, camera: CameraModel, initial_pose: Pose,
                 cfg: TrackerConfig = TrackerConfig(), noise: ImuNoiseModel = ImuNoiseModel(),
                 tsm_cfg: TsmConfig = TsmConfig(), intermediate_every: int = 0,
                 initial_velocity=None):
        self.map = smap
        self.camera = camera
        self.cfg = cfg
        self.noise = noise
        self.builder = KeyframeBuilder(camera.width, camera.height, tsm_cfg, noise, intermediate_every)
        self.initial_pose = initial_pose
        self.initial_velocity = np.zeros(3) if initial_velocity is None else np.asarray(initial_velocity, float)
        self.phase = "init"
        self.pending: List[tuple] = []        # (keyframe, vision-only state)
        self.window = SlidingWindow(size=cfg.window_size)
        self.records: List[StateRecord] = []
        self.stats = RunStats()
        self._supports: List[float] = []
        self._last_good: Optional[FullState] = None
        self._boot_pose = initial_pose

    # -- helpers
    def _bias(self):
        s = self.window.nodes[-1].state if self.window.nodes else None
        return (s.bias_acc, s.bias_gyro) if s is not None else (np.zeros(3), np.zeros(3))

    def _sample(self, pose: Pose, key: int) -> np.ndarray:
        active = refresh_active_set(self.map, pose, self.camera, self.cfg.margin_factor)
        return self.map.points[sample_points(active, self.cfg.sample_size, self.cfg.seed + key)]

    def _localize(self, tsm: TimeSurfaceMap, pose: Pose, key: int, huber=None) -> LocalizationResult:
        return localize_single_frame(tsm, self._sample(pose, key), pose, self.camera, self.cfg, huber)

    def _acceptable(self, tsm: TimeSurfaceMap, pose: Pose, key: int) -> bool:
        pts = self._sample(pose, key)
        support, n = edge_support(tsm, pts, pose_vector(pose.rotation, pose.translation), self.camera)
        ref = self.reference_support()
        if n < self.cfg.min_overlap or support < self.cfg.min_support:
            return False
        return ref is None or support * self.cfg.divergence_factor >= ref

    def reference_support(self) -> Optional[float]:
        if len(self._supports) < 3:
            return None
        return float(np.median(self._supports[-20:]))

    # -- main entry
    def process(self, bundle: FrameBundle) -> Optional[StateRecord]:
        t0 = time.perf_counter()
        prev = self.window.nodes[-1].state if self.phase == "track" and self.window.nodes else None
        if self.phase == "init" and self.pending:
            prev = self.pending[-1][1]
        kf = self.builder.build(bundle, prev, self._bias() if self.phase == "track" else
                                (np.zeros(3), np.zeros(3)))
        self.stats.keyframes += 1
        self.stats.timings["keyframes"] += time.perf_counter() - t0
        t1 = time.perf_counter()
        if self.phase == "init":
            rec = self._process_init(kf)
            self.stats.timings["init"] += time.perf_counter() - t1
        elif self.phase == "track":
            rec = self._process_track(kf)
            self.stats.timings["tracking"] += time.perf_counter() - t1
        else:
            rec = self._process_lost(kf)
            self.stats.timings["tracking"] += time.perf_counter() - t1
        if rec is not None:
            self.records.append(rec)
        return rec

    def _process_init(self, kf: Keyframe) -> Optional[StateRecord]:
        pose = self._boot_pose
        try:
            for j, tsm in enumerate(kf.intermediate):
                pose = self._localize(tsm, pose, kf.index * 16 + j).pose
            pose = self._localize(kf.tsm, pose, kf.index * 16 + 15).pose
            if not self._acceptable(kf.tsm, pose, kf.index):
                raise InsufficientOverlapError("poor edge alignment")
        except InsufficientOverlapError as exc:
            log.warning("bootstrap localization failed at t=%.3f: %s", kf.t, exc)
            self.pending = []
            return None
        self._boot_pose = pose
        vel = self.initial_velocity if not self.pending else np.zeros(3)
        state = FullState(pose.rotation, pose.translation, vel, np.zeros(3), np.zeros(3), kf.t)
        self.pending.append((kf, state))
        if len(self.pending) < self.cfg.init_frame_count:
            return StateRecord(kf.t, state, False, "init")
        self.stats.init_attempts += 1
        states = [s for _, s in self.pending]
        pres = [k.pre_from_prev for k, _ in self.pending]
        try:
            res = initialize(states, pres, self.noise, self.cfg)
        except (InitializationError, ValueError) as exc:
            log.info("initialization retry: %s", exc)
            self.pending.pop(0)
            return StateRecord(kf.t, state, False, "init")
        keep = self.cfg.window_size
        nodes = [WindowNode(k.t, k.tsm, p, s, k.index)
                 for (k, _), s, p in zip(self.pending, res.states, res.preintegrations)]
        nodes = nodes[-keep:]
        nodes[0] = replace(nodes[0], pre=None)
        self.window = SlidingWindow(nodes, self.cfg.window_size)
        self.phase = "track"
        self.stats.init_time = kf.t
        self._last_good = nodes[-1].state
        self.pending = []
        log.info("initialized at t=%.3f, gyro bias %s", kf.t, np.round(nodes[-1].state.bias_gyro, 5))
        return StateRecord(kf.t, nodes[-1].state, False, "init")

    def _process_track(self, kf: Keyframe) -> StateRecord:
        res = track_keyframe(self.window, kf, self.map, self.camera, self.cfg, self.noise, self.reference_support())
        if res.lost:
            log.warning("tracking lost at t=%.3f: %s", kf.t, res.reason)
            self.stats.lost_events += 1
            self.stats.lost_at.append(kf.t)
            self.phase = "lost"
            self._lost_kf = kf
            return StateRecord(kf.t, self._last_good, True, "lost")
        self._supports.append(res.support)
        self._last_good = res.state
        return StateRecord(kf.t, res.state, False, "track")

    def _process_lost(self, kf: Keyframe) -> StateRecord:
        """Re-localize from the frozen pose with a wider robust kernel."""
        good = self._last_good
        try:
            loc = self._localize(kf.tsm, good.pose, kf.index, self.cfg.relocalize_huber_scale)
            loc = self._localize(kf.tsm, loc.pose, kf.index)
        except InsufficientOverlapError:
            return StateRecord(kf.t, good, True, "lost")
        if not self._acceptable(kf.tsm, loc.pose, kf.index):
            return StateRecord(kf.t, good, True, "lost")
        state = FullState(loc.pose.rotation, loc.pose.translation, good.velocity, good.bias_acc,
                          good.bias_gyro, kf.t)
        self.window = SlidingWindow([WindowNode(kf.t, kf.tsm, None, state, kf.index)], self.cfg.window_size)
        self.phase = "track"
        self.stats.relocalized += 1
        self._last_good = state
        return StateRecord(kf.t, state, False, "relocalized")

    def run(self, bundles: Iterable[FrameBundle]) -> List[StateRecord]:
        for b in bundles:
            self.process(b)
        return self.records
