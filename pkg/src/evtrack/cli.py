"""Command-line entry points: simulate, track, evaluate, plot.

Exit status is 0 on success, 2 for configuration or missing-file problems
and 1 for anything that fails at run time. Every failure prints one line on
stderr. ``EVTRACK_LOG_LEVEL`` (``DEBUG``, ``INFO``, ``WARNING``...) sets the
log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, InitConfig, PathsConfig, RunConfig, dump, load
from .evaluation import EvaluationError, Trajectory, evaluate_ate, milestone_ate
from .frames import PipelineConfig, iter_bundles
from .io import ParseError, read_events, read_imu, read_trajectory, write_events, write_imu, write_trajectory
from .map_store import MapFormatError, load_map, save_map
from .synth import PRESETS, eval_trajectory, gen_events, gen_imu, imu_times, preset
from .tracker import Tracker

log = logging.getLogger("evtrack")


class UsageError(Exception):
    """Bad configuration or input paths (exit status 2)."""


# ------------------------------------------------------------------ simulate

def cmd_simulate(args) -> dict:
    sc = preset(args.preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    scene = sc.scene()
    events = gen_events(sc.motion, scene, sc.sim)
    imu = gen_imu(sc.motion, sc.sim)
    write_events(events, out / "events.csv")
    write_imu(imu, out / "imu.csv")
    save_map(scene, out / "map.ply")
    t = imu_times(sc.motion, sc.sim)
    gt = Trajectory.from_poses(t, [eval_trajectory(sc.motion, float(x)).pose for x in t])
    write_trajectory(gt, out / "groundtruth.txt")
    s0 = sc.initial()
    cfg = RunConfig(
        camera=sc.sim.camera,
        pipeline=PipelineConfig(n_event=sc.n_event, n_imu=sc.n_imu),
        tracker=dataclasses.replace(RunConfig().tracker, max_iters=sc.max_iters,
                                    init_frame_count=sc.init_frame_count),
        paths=PathsConfig(events="events.csv", imu="imu.csv", map="map.ply", groundtruth="groundtruth.txt"),
        init=InitConfig(tuple(float(x) for x in s0.pose.translation), tuple(float(x) for x in s0.pose.rotation.q),
                        tuple(float(x) for x in s0.velocity), sc.intermediate_every),
    )
    dump(cfg, out / "run.ini")
    return {"preset": sc.name, "events": int(len(events)), "imu": len(imu), "map_points": len(scene),
            "directory": str(out), "config": str(out / "run.ini"), "seconds": round(time.perf_counter() - t0, 3)}


# ------------------------------------------------------------------ track

def _require(cfg: RunConfig, name: str) -> Path:
    p = cfg.resolve(name)
    if p is None:
        raise UsageError(f"paths.{name}: not set")
    if not p.exists():
        raise UsageError(f"paths.{name}: file not found: {p}")
    return p


def cmd_track(args) -> dict:
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.model:
        cfg = dataclasses.replace(cfg, tracker=dataclasses.replace(cfg.tracker, motion_model=args.model))
    map_path, ev_path, imu_path = _require(cfg, "map"), _require(cfg, "events"), _require(cfg, "imu")
    try:
        smap = load_map(map_path)
        events = read_events(ev_path)
        imu = read_imu(imu_path)
    except (ParseError, MapFormatError) as exc:
        raise UsageError(str(exc)) from None

    t0 = time.perf_counter()
    tracker = Tracker(smap, cfg.camera, cfg.init.pose(), cfg.tracker, cfg.noise, cfg.tsm,
                      intermediate_every=cfg.init.intermediate_every, initial_velocity=cfg.init.velocity)
    records = tracker.run(iter_bundles(events, imu, cfg.pipeline))
    wall = time.perf_counter() - t0

    good = [r for r in records if not r.lost]
    traj = Trajectory.from_poses([r.t for r in good], [r.state.pose for r in good])
    out = Path(args.output) if args.output else cfg.resolve("output")
    write_trajectory(traj, out)
    st = tracker.stats
    report = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "motion_model": cfg.tracker.motion_model,
        "trajectory": str(out),
        "keyframes": st.keyframes,
        "records": len(records),
        "init_time": st.init_time,
        "lost_events": st.lost_events,
        "lost_at": st.lost_at,
        "relocalized": st.relocalized,
        "lost": [bool(r.lost) for r in records],
        "completed": bool(records) and not any(r.lost for r in records) and st.lost_events == 0,
        "timings": {**{k: round(v, 4) for k, v in st.timings.items()}, "wall": round(wall, 4)},
    }
    gt_path = cfg.resolve("groundtruth")
    if gt_path is not None and gt_path.exists() and len(traj):
        try:
            ate = evaluate_ate(traj, read_trajectory(gt_path))
            report["ate"] = {"position_cm": ate.position_cm, "orientation_deg": ate.orientation_deg,
                             "pairs": ate.count}
        except EvaluationError as exc:
            report["ate"] = {"error": str(exc)}
    rep_path = Path(args.report) if args.report else cfg.resolve("report")
    rep_path.write_text(json.dumps(report, indent=2) + "\n")
    return {k: report[k] for k in ("config_hash", "keyframes", "lost_events", "completed", "trajectory")} | (
        {"ate": report["ate"]} if "ate" in report else {})


# ------------------------------------------------------------------ evaluate / plot

def _read_traj(path) -> Trajectory:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"trajectory file not found: {p}")
    try:
        return read_trajectory(p)
    except ParseError as exc:
        raise UsageError(str(exc)) from None


def cmd_evaluate(args) -> dict:
    est, gt = _read_traj(args.estimate), _read_traj(args.groundtruth)
    if args.start is not None or args.end is not None:
        est, gt = est.between(args.start, args.end), gt.between(args.start, args.end)
    r = evaluate_ate(est, gt)
    out = {"position_cm": r.position_cm, "orientation_deg": r.orientation_deg, "pairs": r.count}
    if args.milestones:
        out["milestones"] = [{"fraction": m.fraction, "t": m.t, "reached": m.reached,
                              "position_cm": m.position_cm, "orientation_deg": m.orientation_deg}
                             for m in milestone_ate(est, gt)]
    return out


def cmd_plot(args) -> dict:
    from .plotting import plot_trajectories

    trajs = [_read_traj(p) for p in args.trajectories]
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.trajectories]
    if len(labels) != len(trajs):
        raise UsageError("--labels needs one name per trajectory")
    return {"figure": str(plot_trajectories(trajs, labels, args.out))}


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evtrack", description="Map-based event-inertial tracking.")
    p.add_argument("--version", action="version", version=f"evtrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic dataset and a matching run config")
    s.add_argument("--preset", choices=PRESETS, default="circle")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="run the tracker described by a config file")
    t.add_argument("config")
    t.add_argument("--model", choices=("zeroth", "first", "second"), help="override tracker.motion_model")
    t.add_argument("--output", help="trajectory file (default: paths.output)")
    t.add_argument("--report", help="JSON run report (default: paths.report)")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="ATE of an estimate against ground truth")
    e.add_argument("estimate")
    e.add_argument("groundtruth")
    e.add_argument("--milestones", action="store_true", help="also report 30/50/100%% of the sequence")
    e.add_argument("--start", type=float, help="clip both trajectories to t >= START")
    e.add_argument("--end", type=float, help="clip both trajectories to t <= END")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("plot", help="translation and rotation against time (SVG)")
    g.add_argument("trajectories", nargs="+")
    g.add_argument("--out", default="trajectory.svg")
    g.add_argument("--labels", help="comma-separated legend names")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    level = os.environ.get("EVTRACK_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"evtrack {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # one-line reason, full trace only at DEBUG
        log.debug("failure", exc_info=True)
        print(f"evtrack {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=_json_default))
    return 0


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
