"""Static figures of trajectories: translation and rotation against time."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.spatial.transform import Rotation as ScipyRotation  # noqa: E402

from .evaluation import Trajectory  # noqa: E402


def euler_deg(traj: Trajectory) -> np.ndarray:
    """Roll, pitch, yaw (extrinsic xyz) in degrees, unwrapped along time."""
    if len(traj) == 0:
        return np.zeros((0, 3))
    xyzw = np.column_stack([traj.quats[:, 1:4], traj.quats[:, 0]])
    e = ScipyRotation.from_quat(xyzw).as_euler("xyz")
    return np.degrees(np.unwrap(e, axis=0))


def plot_trajectories(trajs: Sequence[Trajectory], labels: Sequence[str], path) -> Path:
    """Six stacked panels (x, y, z in metres; roll, pitch, yaw in degrees), one line per trajectory."""
    fig, axes = plt.subplots(6, 1, figsize=(8, 11), sharex=True)
    names = ["x [m]", "y [m]", "z [m]", "roll [deg]", "pitch [deg]", "yaw [deg]"]
    for traj, label in zip(trajs, labels):
        ang = euler_deg(traj)
        for k in range(3):
            axes[k].plot(traj.t, traj.positions[:, k], label=label, lw=1.2)
            axes[k + 3].plot(traj.t, ang[:, k], label=label, lw=1.2)
    for ax, name in zip(axes, names):
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time [s]")
    axes[0].legend(loc="best", fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg")
    plt.close(fig)
    return path
