"""Plain-text sensor and trajectory files.

events: ``t,u,v,p`` per line (seconds, pixel column, pixel row, +1/-1)
imu:    ``t,ax,ay,az,gx,gy,gz`` per line (s, m/s^2, rad/s)
trajectory: ``t x y z qx qy qz qw`` per line, space separated

A non-numeric first line is treated as a header. Floats are written with
17 significant digits in sensor files so they read back bit-identical.
"""

from __future__ import annotations

import logging
import warnings
from pathlib import Path
from typing import List

import numpy as np

from .event_surface import EVENT_DTYPE
from .evaluation import Trajectory
from .preintegration import ImuSample

log = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


def _rows(path: Path, ncol: int, sep):
    """Yield ``(lineno, fields)`` for data lines; header allowed on the first."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split(sep) if sep else s.split()
            if len(parts) != ncol:
                if lineno == 1 and not _numeric(parts[0]):
                    continue
                raise ParseError(f"{path}:{lineno}: expected {ncol} columns, got {len(parts)}")
            if lineno == 1 and not _numeric(parts[0]):
                continue
            yield lineno, parts


def _numeric(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_events(path) -> np.ndarray:
    path = Path(path)
    t, u, v, p = [], [], [], []
    for lineno, f in _rows(path, 4, ","):
        try:
            ti, ui, vi, pi = float(f[0]), int(f[1]), int(f[2]), int(f[3])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: cannot parse event {','.join(f)!r}") from None
        if pi not in (-1, 1):
            raise ParseError(f"{path}:{lineno}: polarity must be -1 or +1, got {pi}")
        if not np.isfinite(ti):
            raise ParseError(f"{path}:{lineno}: non-finite timestamp")
        t.append(ti)
        u.append(ui)
        v.append(vi)
        p.append(pi)
    ev = np.empty(len(t), dtype=EVENT_DTYPE)
    ev["t"], ev["u"], ev["v"], ev["p"] = t, u, v, p
    return ev


def write_events(events: np.ndarray, path) -> None:
    with open(Path(path), "w") as fh:
        fh.write("t,u,v,p\n")
        for rec in events:
            fh.write(f"{float(rec['t'])!r},{int(rec['u'])},{int(rec['v'])},{int(rec['p'])}\n")


def read_imu(path, check_units: bool = True) -> List[ImuSample]:
    path = Path(path)
    out = []
    last_t = -np.inf
    for lineno, f in _rows(path, 7, ","):
        try:
            vals = [float(x) for x in f]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: cannot parse IMU row {','.join(f)!r}") from None
        if not all(np.isfinite(vals)):
            raise ParseError(f"{path}:{lineno}: non-finite IMU value")
        if vals[0] <= last_t:
            raise ParseError(f"{path}:{lineno}: IMU timestamps must be strictly increasing")
        last_t = vals[0]
        out.append(ImuSample(vals[0], np.array(vals[1:4]), np.array(vals[4:7])))
    if check_units and out:
        med = float(np.median([np.linalg.norm(s.acc) for s in out]))
        if not 2.0 <= med <= 30.0:
            warnings.warn(f"median accelerometer norm {med:.3g} m/s^2 looks like the wrong unit",
                          RuntimeWarning, stacklevel=2)
    return out


def write_imu(samples, path) -> None:
    with open(Path(path), "w") as fh:
        fh.write("t,ax,ay,az,gx,gy,gz\n")
        for s in samples:
            vals = [s.t, *np.asarray(s.acc, float), *np.asarray(s.gyro, float)]
            fh.write(",".join(repr(float(x)) for x in vals) + "\n")


def _g9(x: float) -> str:
    s = f"{x:.9g}"
    return "0" if s == "-0" else s


def write_trajectory(traj: Trajectory, path) -> None:
    """One ``t x y z qx qy qz qw`` record per line, 9 significant digits."""
    with open(Path(path), "w") as fh:
        for t, p, q in zip(traj.t, traj.positions, traj.quats):
            w, x, y, z = q
            fields = [_g9(v) for v in (*p, x, y, z, w)]
            fh.write(f"{t:.9f} " + " ".join(fields) + "\n")


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    rows = []
    for lineno, f in _rows(path, 8, None):
        try:
            rows.append([float(x) for x in f])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: cannot parse trajectory row") from None
    if not rows:
        return Trajectory.empty()
    a = np.array(rows)
    quats = np.column_stack([a[:, 7], a[:, 4], a[:, 5], a[:, 6]])
    return Trajectory(a[:, 0], a[:, 1:4], quats)
