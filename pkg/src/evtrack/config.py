"""Run configuration: typed INI-style sections mapped onto the module configs.

Grammar (parsed with :mod:`configparser`):

* ``[section]`` headers, one of ``camera tsm pipeline tracker noise paths init``;
* ``key = value`` lines; ``#`` or ``;`` start a comment, at line start or after whitespace;
* integers and floats in C locale notation, booleans ``true``/``false``,
  vectors as whitespace- or comma-separated floats, strings verbatim;
* quaternions are written scalar-first (``w x y z``).

Unknown sections or keys are errors. Relative paths resolve against the
directory holding the config file.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .event_surface import TsmConfig
from .frames import PipelineConfig
from .geometry import CameraModel, Pose, Rotation
from .preintegration import ImuNoiseModel
from .tracker import TrackerConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class PathsConfig:
    events: Optional[str] = None
    imu: Optional[str] = None
    map: Optional[str] = None
    output: str = "trajectory.txt"
    report: str = "report.json"
    groundtruth: Optional[str] = None


@dataclass(frozen=True)
class InitConfig:
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    intermediate_every: int = 0

    def pose(self) -> Pose:
        return Pose(Rotation(self.orientation), self.position)


@dataclass(frozen=True)
class RunConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    tsm: TsmConfig = field(default_factory=TsmConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    noise: ImuNoiseModel = field(default_factory=ImuNoiseModel)
    paths: PathsConfig = field(default_factory=PathsConfig)
    init: InitConfig = field(default_factory=InitConfig)
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, name: str) -> Optional[Path]:
        v = getattr(self.paths, name)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


SECTIONS = ("camera", "tsm", "pipeline", "tracker", "noise", "paths", "init")

# keys whose values are vectors and their lengths
_VECTORS = {("camera", "rotation_cb"): 4, ("camera", "translation_cb"): 3, ("noise", "gravity"): 3,
            ("init", "position"): 3, ("init", "orientation"): 4, ("init", "velocity"): 3}


# floats that may be set to "inf" to disable a limit
_UNBOUNDED = {"pipeline.max_interval"}


def _kind(section: str, f: dataclasses.Field) -> str:
    if (section, f.name) in _VECTORS:
        return "vector"
    if section == "paths":
        return "str"
    d = f.default if f.default is not dataclasses.MISSING else None
    for t in (bool, int, float, str):
        if isinstance(d, t):
            return t.__name__
    return "str"


def _parse(section: str, f: dataclasses.Field, raw: str):
    name = f"{section}.{f.name}"
    kind = _kind(section, f)
    s = raw.strip()
    try:
        if kind == "vector":
            vals = [float(x) for x in s.replace(",", " ").split()]
            if len(vals) != _VECTORS[(section, f.name)]:
                raise ConfigError(name, f"expected {_VECTORS[(section, f.name)]} numbers, got {len(vals)}")
            if not all(np.isfinite(vals)):
                raise ConfigError(name, "non-finite value")
            return tuple(vals)
        if kind == "bool":
            if s.lower() not in ("true", "false"):
                raise ConfigError(name, f"expected true or false, got {s!r}")
            return s.lower() == "true"
        if kind == "int":
            return int(s)
        if kind == "float":
            v = float(s)
            if np.isnan(v) or (np.isinf(v) and name not in _UNBOUNDED):
                raise ConfigError(name, "non-finite value")
            return v
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, f"cannot parse {s!r} as {kind}") from None
    if section == "paths" and s.lower() in ("", "none"):
        return None
    return s


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, Rotation):
        value = value.q
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _section_obj(cfg: RunConfig, section: str):
    return getattr(cfg, section)


def _build(section: str, cls, values: dict):
    if section == "camera":
        if "rotation_cb" in values:
            values["rotation_cb"] = Rotation(values["rotation_cb"])
    if section == "noise" and "gravity" in values:
        values["gravity"] = np.array(values["gravity"])
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def loads(text: str, base_dir: Path = Path(".")) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    default = RunConfig()
    parts = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
    for section in SECTIONS:
        cls = type(getattr(default, section))
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        if cp.has_section(section):
            for key, raw in cp.items(section):
                if key not in fields:
                    raise ConfigError(f"{section}.{key}", "unknown key")
                values[key] = _parse(section, fields[key], raw)
        parts[section] = _build(section, cls, values) if values else getattr(default, section)
    return RunConfig(**parts, base_dir=Path(base_dir))


def load(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    return loads(path.read_text(), path.parent)


def dumps(cfg: RunConfig) -> str:
    out = io.StringIO()
    for section in SECTIONS:
        obj = _section_obj(cfg, section)
        out.write(f"[{section}]\n")
        for f in dataclasses.fields(obj):
            out.write(f"{f.name} = {_format(getattr(obj, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def dump(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
