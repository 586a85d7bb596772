"""Trajectories and absolute trajectory error with first-pose alignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .geometry import Pose, Rotation

ASSOCIATION_TOLERANCE = 0.01


class EvaluationError(ValueError):
    pass


class Trajectory:
    """Timestamped poses; quaternions stored scalar-first."""

    def __init__(self, t, positions, quats):
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        q = np.asarray(quats, dtype=float).reshape(-1, 4)
        if not (len(self.t) == len(self.positions) == len(q)):
            raise ValueError("trajectory arrays differ in length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        if len(q) and np.any(np.abs(np.linalg.norm(q, axis=1) - 1.0) > 1e-6):
            raise ValueError("trajectory quaternions must be unit length within 1e-6")
        self.quats = q

    @classmethod
    def empty(cls) -> "Trajectory":
        return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 4)))

    @classmethod
    def from_poses(cls, t: Sequence[float], poses: Sequence[Pose]) -> "Trajectory":
        if len(poses) == 0:
            return cls.empty()
        return cls(t, [p.translation for p in poses], [p.rotation.q for p in poses])

    def __len__(self) -> int:
        return len(self.t)

    def pose(self, i: int) -> Pose:
        return Pose(Rotation(self.quats[i]), self.positions[i])

    def poses(self) -> List[Pose]:
        return [self.pose(i) for i in range(len(self))]

    def between(self, start: Optional[float] = None, end: Optional[float] = None) -> "Trajectory":
        m = np.ones(len(self.t), bool)
        if start is not None:
            m &= self.t >= start
        if end is not None:
            m &= self.t <= end
        return Trajectory(self.t[m], self.positions[m], self.quats[m])

    def transformed(self, T: Pose) -> "Trajectory":
        """Every pose left-multiplied by ``T``."""
        poses = [T * p for p in self.poses()]
        return Trajectory.from_poses(self.t, poses)


def associate(est: Trajectory, gt: Trajectory, tolerance: float = ASSOCIATION_TOLERANCE):
    """Index pairs ``(i_est, i_gt)`` matching each estimate to its nearest ground-truth stamp."""
    if len(gt) == 0 or len(est) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    j = np.searchsorted(gt.t, est.t)
    lo = np.clip(j - 1, 0, len(gt) - 1)
    hi = np.clip(j, 0, len(gt) - 1)
    pick = np.where(np.abs(gt.t[lo] - est.t) <= np.abs(gt.t[hi] - est.t), lo, hi)
    ok = np.abs(gt.t[pick] - est.t) <= tolerance
    return np.nonzero(ok)[0], pick[ok]


@dataclass
class AteResult:
    position_cm: float
    orientation_deg: float
    count: int
    position_errors: np.ndarray
    orientation_errors: np.ndarray


def evaluate_ate(est: Trajectory, gt: Trajectory, tolerance: float = ASSOCIATION_TOLERANCE,
                 start: Optional[float] = None, end: Optional[float] = None) -> AteResult:
    """Position RMSE (cm) and geodesic orientation RMSE (degrees).

    The estimate is mapped onto the ground truth by the rigid transform that
    sends its first associated pose onto the matching ground-truth pose. That
    anchor pair has zero error by construction and is left out of the RMSE
    whenever other pairs exist.
    """
    if start is not None or end is not None:
        est = est.between(start, end)
    ie, ig = associate(est, gt, tolerance)
    if len(ie) == 0:
        raise EvaluationError("no estimate has a ground-truth pose within the association tolerance")
    T = gt.pose(ig[0]) * est.pose(ie[0]).inverse()
    pos, rot = [], []
    for a, b in zip(ie, ig):
        e = T * est.pose(a)
        g = gt.pose(b)
        pos.append(np.linalg.norm(e.translation - g.translation))
        rot.append(e.rotation.angle_to(g.rotation))
    pos = np.array(pos)
    rot = np.degrees(np.array(rot))
    if len(pos) > 1:
        pos, rot = pos[1:], rot[1:]
    return AteResult(100.0 * float(np.sqrt(np.mean(pos ** 2))), float(np.sqrt(np.mean(rot ** 2))),
                     len(ie), pos, rot)


@dataclass
class Milestone:
    fraction: float
    t: float
    reached: bool
    position_cm: Optional[float]
    orientation_deg: Optional[float]


def milestone_ate(est: Trajectory, gt: Trajectory, fractions=(0.3, 0.5, 1.0),
                  tolerance: float = ASSOCIATION_TOLERANCE) -> List[Milestone]:
    """ATE over the leading ``fraction`` of the ground-truth time span.

    A milestone counts as reached when the estimate extends to within two
    median estimate intervals of the milestone time; unreached milestones
    carry no numbers.
    """
    if len(gt) == 0:
        raise EvaluationError("empty ground truth")
    t0, t1 = gt.t[0], gt.t[-1]
    spacing = float(np.median(np.diff(est.t))) if len(est) > 1 else 0.0
    out = []
    for f in fractions:
        tm = t0 + f * (t1 - t0)
        reached = len(est) > 0 and est.t[-1] >= tm - 2.0 * spacing
        if not reached:
            out.append(Milestone(f, tm, False, None, None))
            continue
        r = evaluate_ate(est.between(None, tm + 1e-12) if f < 1.0 else est, gt, tolerance)
        out.append(Milestone(f, tm, True, r.position_cm, r.orientation_deg))
    return out
