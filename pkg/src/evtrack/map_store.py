"""Prior semi-dense point cloud, active-set culling and point sampling."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import CameraModel, Pose, world_point_to_camera

log = logging.getLogger(__name__)

Z_NEAR = 0.1
Z_FAR = 20.0


class MapFormatError(ValueError):
    pass


class SemiDenseMap:
    """Immutable ``(n, 3)`` array of world points in metres."""

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("map contains non-finite coordinates")
        pts.flags.writeable = False
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ActivePointSet:
    indices: np.ndarray
    keyframe_id: int = -1

    def __len__(self) -> int:
        return len(self.indices)


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = [p.strip() for p in s.split(",")]
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if not rows and lineno == 1:
                continue  # header
            raise MapFormatError(f"{path}:{lineno}: cannot parse row {s!r}") from None
        if len(vals) != 3 or not all(np.isfinite(vals)):
            raise MapFormatError(f"{path}:{lineno}: expected 3 finite values, got {s!r}")
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, 3)


def _load_ply(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MapFormatError(f"{path}:1: missing 'ply' magic")
    n_vertex = None
    props = []
    in_vertex = False
    body = None
    for lineno, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise MapFormatError(f"{path}:{lineno}: only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = lineno
            break
    if body is None or n_vertex is None:
        raise MapFormatError(f"{path}: incomplete PLY header")
    try:
        idx = [props.index(a) for a in ("x", "y", "z")]
    except ValueError:
        raise MapFormatError(f"{path}: vertex element lacks x/y/z properties") from None
    pts = np.empty((n_vertex, 3))
    for k in range(n_vertex):
        lineno = body + 1 + k
        if lineno > len(lines):
            raise MapFormatError(f"{path}:{lineno}: expected {n_vertex} vertices, file ended")
        tok = lines[lineno - 1].split()
        try:
            pts[k] = [float(tok[i]) for i in idx]
        except (ValueError, IndexError):
            raise MapFormatError(f"{path}:{lineno}: cannot parse vertex row {lines[lineno - 1]!r}") from None
    return pts


def load_map(path) -> SemiDenseMap:
    """Load a CSV (``x,y,z`` per line) or ASCII PLY point cloud."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"map file not found: {path}")
    pts = _load_ply(path) if path.suffix.lower() == ".ply" else _load_csv(path)
    if len(pts) == 0:
        raise MapFormatError(f"{path}: map is empty")
    return SemiDenseMap(pts)


def save_map(m: SemiDenseMap, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        with open(path, "w") as fh:
            fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(m)}\n"
                     "property float x\nproperty float y\nproperty float z\nend_header\n")
            for p in m.points:
                fh.write(" ".join(repr(float(x)) for x in p) + "\n")
    else:
        with open(path, "w") as fh:
            fh.write("x,y,z\n")
            for p in m.points:
                fh.write(",".join(repr(float(x)) for x in p) + "\n")


def frustum_mask(points: np.ndarray, pose: Pose, camera: CameraModel, margin_factor: float = 1.0,
                 z_near: float = Z_NEAR, z_far: float = Z_FAR) -> np.ndarray:
    """Points whose projection lies in the image widened by ``margin_factor``."""
    pc = world_point_to_camera(points, pose.rotation, pose.translation, camera)
    z = pc[:, 2]
    depth_ok = (z >= z_near) & (z <= z_far)
    uv, front = camera.project_points(pc)
    ok = depth_ok & front
    ok[ok] = camera.in_image(uv[ok], margin_factor)
    return ok


def refresh_active_set(m: SemiDenseMap, predicted_pose: Pose, camera: CameraModel,
                       margin_factor: float = 1.3, previous_visible: Optional[np.ndarray] = None,
                       keyframe_id: int = -1, z_near: float = Z_NEAR, z_far: float = Z_FAR) -> ActivePointSet:
    """Union of the widened predicted frustum and last solve's in-view points."""
    if margin_factor < 1.0:
        raise ValueError("margin_factor must be >= 1")
    idx = np.nonzero(frustum_mask(m.points, predicted_pose, camera, margin_factor, z_near, z_far))[0]
    if previous_visible is not None and len(previous_visible):
        idx = np.union1d(idx, np.asarray(previous_visible, dtype=np.intp))
    if len(idx) == 0:
        log.warning("active point set is empty")
    return ActivePointSet(idx.astype(np.intp), keyframe_id)


def sample_points(active: ActivePointSet, k: int = 1500, seed: int = 0) -> np.ndarray:
    """Uniform sample of map indices without replacement (all if ``|active| <= k``)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = np.asarray(active.indices)
    if len(idx) == 0:
        warnings.warn("sampling from an empty active set", RuntimeWarning, stacklevel=2)
        return idx.copy()
    if len(idx) <= k:
        return idx.copy()
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(idx, size=k, replace=False))
