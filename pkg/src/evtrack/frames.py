"""Adaptive keyframing: bundle events and IMU by count, then build keyframes.

A bundle is emitted when at least ``n_event`` new events and ``n_imu`` new
IMU samples have been buffered and an IMU sample at or after the last
event has arrived; the frame time is that IMU sample's timestamp. The IMU
sample at the frame time closes the current span and opens the next one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .event_surface import (EVENT_DTYPE, ORDER_TOLERANCE, SurfaceOfActiveEvents, TimeSurfaceMap,
                            TsmConfig, as_event_array, build_tsm)
from .preintegration import (FullState, ImuNoiseModel, ImuSample, Preintegration, predict,
                             preintegrate)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    n_event: int = 15000
    n_imu: int = 4
    max_interval: float = 1.0

    def __post_init__(self):
        if self.n_event < 1 or self.n_imu < 1:
            raise ValueError("n_event and n_imu must be >= 1")
        if not self.max_interval > 0:
            raise ValueError("max_interval must be positive")


@dataclass(frozen=True, eq=False)
class FrameBundle:
    events: np.ndarray          # EVENT_DTYPE
    imu: Tuple[ImuSample, ...]  # starts with the previous boundary sample, if any
    t_frame: float
    index: int = 0
    forced: bool = False

    @property
    def n_new_imu(self) -> int:
        return len(self.imu) - (1 if self.index > 0 else 0)


class FrameBuffer:
    """Incremental bundler fed one measurement at a time."""

    def __init__(self, cfg: PipelineConfig = PipelineConfig()):
        self.cfg = cfg
        self._events: List[tuple] = []
        self._imu: List[ImuSample] = []
        self._boundary: Optional[ImuSample] = None
        self._last_event_t = -np.inf
        self._span_start: Optional[float] = None
        self.dropped = 0
        self.count = 0

    def ingest_event(self, e) -> Optional[FrameBundle]:
        if e.t < self._last_event_t - ORDER_TOLERANCE:
            self.dropped += 1
            return None
        self._events.append((e.t, e.u, e.v, e.p))
        self._last_event_t = max(self._last_event_t, e.t)
        if self._imu and self._imu[-1].t >= self._last_event_t:
            return self._maybe_emit(self._imu[-1].t)
        return None

    def ingest_imu(self, s: ImuSample) -> Optional[FrameBundle]:
        last = self._imu[-1] if self._imu else self._boundary
        if last is not None and s.t <= last.t:
            raise ValueError(f"IMU sample at t={s.t} is not after t={last.t}")
        self._imu.append(s)
        if self._span_start is None:
            self._span_start = s.t
        if self._last_event_t <= s.t:
            return self._maybe_emit(s.t)
        return None

    def _maybe_emit(self, t: float) -> Optional[FrameBundle]:
        enough = len(self._events) >= self.cfg.n_event and len(self._imu) >= self.cfg.n_imu
        forced = not enough and t - self._span_start >= self.cfg.max_interval
        if not (enough or forced):
            return None
        # the closing IMU sample is the one at time t; later samples stay buffered
        k = next(i for i, s in enumerate(self._imu) if s.t == t)
        span = self._imu[:k + 1]
        imu = tuple(([self._boundary] if self._boundary is not None else []) + span)
        ev = np.array(self._events, dtype=EVENT_DTYPE) if self._events else np.empty(0, EVENT_DTYPE)
        ev = ev[np.argsort(ev["t"], kind="stable")]
        bundle = FrameBundle(ev, imu, float(t), self.count, forced)
        if forced:
            log.info("forcing frame %d at t=%.3f with %d events", self.count, t, len(ev))
        self.count += 1
        self._events = []
        self._boundary = span[-1]
        self._imu = self._imu[k + 1:]
        self._span_start = t
        return bundle


def merge_streams(events: np.ndarray, imu: Sequence[ImuSample]) -> Iterator[tuple]:
    """Time-ordered ``("event", Event-like)`` / ``("imu", sample)`` items; events first on ties."""
    events = as_event_array(events)
    imu_t = np.array([s.t for s in imu])
    cut = np.searchsorted(events["t"], imu_t, side="right")
    start = 0
    for k, s in enumerate(imu):
        for e in events[start:cut[k]]:
            yield "event", _EventView(e)
        start = cut[k]
        yield "imu", s
    for e in events[start:]:
        yield "event", _EventView(e)


class _EventView:
    __slots__ = ("t", "u", "v", "p")

    def __init__(self, rec):
        self.t, self.u, self.v, self.p = float(rec["t"]), int(rec["u"]), int(rec["v"]), int(rec["p"])


def replay(events, imu: Sequence[ImuSample], cfg: PipelineConfig = PipelineConfig()) -> List[FrameBundle]:
    """Bundles produced by feeding the merged stream through :class:`FrameBuffer`."""
    buf = FrameBuffer(cfg)
    out = []
    for kind, item in merge_streams(events, imu):
        b = buf.ingest_event(item) if kind == "event" else buf.ingest_imu(item)
        if b is not None:
            out.append(b)
    return out


def iter_bundles(events, imu: Sequence[ImuSample],
                 cfg: PipelineConfig = PipelineConfig()) -> Iterator[FrameBundle]:
    """Vectorized equivalent of :func:`replay` for a time-sorted event array."""
    events = as_event_array(events)
    et = events["t"]
    if len(et) and np.any(np.diff(et) < 0):
        yield from replay(events, imu, cfg)
        return
    imu = list(imu)
    if not imu:
        return
    imu_t = np.array([s.t for s in imu])
    if np.any(np.diff(imu_t) <= 0):
        raise ValueError("IMU timestamps must be strictly increasing")
    n_ev_upto = np.searchsorted(et, imu_t, side="right")
    last_ev_t = np.full(len(imu_t), -np.inf)
    if len(et):
        last_ev_t = np.where(n_ev_upto > 0, et[np.maximum(n_ev_upto - 1, 0)], -np.inf)
    ev_start = 0
    span_first = 0          # index of the first new IMU sample in the current span
    span_start_t = imu_t[0]
    boundary = None
    count = 0
    k = 0
    n = len(imu)
    while k < n:
        # next k with enough events and IMU samples, or hitting the forcing interval
        need_ev = ev_start + cfg.n_event
        k_ev = int(np.searchsorted(n_ev_upto, need_ev, side="left"))
        k_enough = max(k_ev, span_first + cfg.n_imu - 1, k)
        k_force = int(np.searchsorted(imu_t, span_start_t + cfg.max_interval, side="left"))
        k_force = max(k_force, k)
        # an IMU sample can only close a frame if it is not older than the last event
        kk = min(k_enough, k_force)
        if kk >= n:
            return
        if last_ev_t[kk] > imu_t[kk]:
            k = kk + 1
            continue
        forced = kk < k_enough
        stop = n_ev_upto[kk]
        span = imu[span_first:kk + 1]
        bundle_imu = tuple(([boundary] if boundary is not None else []) + span)
        yield FrameBundle(events[ev_start:stop], bundle_imu, float(imu_t[kk]), count, forced)
        count += 1
        ev_start = int(stop)
        boundary = imu[kk]
        span_first = kk + 1
        span_start_t = imu_t[kk]
        k = kk + 1


@dataclass(frozen=True, eq=False)
class Keyframe:
    t: float
    tsm: TimeSurfaceMap
    pre_from_prev: Optional[Preintegration]
    state: Optional[FullState]
    index: int = 0
    n_events: int = 0
    forced: bool = False
    intermediate: Tuple[TimeSurfaceMap, ...] = field(default=())
    imu: Tuple[ImuSample, ...] = field(default=())


class KeyframeBuilder:
    """Owns the surface of active events and turns bundles into keyframes."""

    def __init__(self, width: int, height: int, tsm_cfg: TsmConfig = TsmConfig(),
                 noise: ImuNoiseModel = ImuNoiseModel(), intermediate_every: int = 0):
        self.sae = SurfaceOfActiveEvents(width, height)
        self.tsm_cfg = tsm_cfg
        self.noise = noise
        self.intermediate_every = int(intermediate_every)

    def build(self, bundle: FrameBundle, prev_state: Optional[FullState] = None,
              bias=(np.zeros(3), np.zeros(3))) -> Keyframe:
        return build_keyframe(bundle, self.sae, prev_state, bias, self.tsm_cfg, self.noise,
                              self.intermediate_every)


def build_keyframe(bundle: FrameBundle, sae: SurfaceOfActiveEvents, prev_state: Optional[FullState],
                   bias=(np.zeros(3), np.zeros(3)), tsm_cfg: TsmConfig = TsmConfig(),
                   noise: ImuNoiseModel = ImuNoiseModel(), intermediate_every: int = 0) -> Keyframe:
    """Fold the bundle into ``sae``, snapshot the TSM and pre-integrate the IMU span.

    With ``intermediate_every > 0`` a TSM is also snapshotted after every that
    many events (used for high-rate localization during bootstrapping).
    """
    ev = bundle.events
    inter = []
    if intermediate_every > 0 and len(ev) > intermediate_every:
        for stop in range(intermediate_every, len(ev), intermediate_every):
            sae.update_many(ev[stop - intermediate_every:stop])
            inter.append(build_tsm(sae, float(ev["t"][stop - 1]), tsm_cfg))
        sae.update_many(ev[(len(ev) - 1) // intermediate_every * intermediate_every:])
    else:
        sae.update_many(ev)
    tsm = build_tsm(sae, max(bundle.t_frame, sae.latest), tsm_cfg)
    pre = None
    state = None
    if prev_state is not None:
        if len(bundle.imu) >= 2:
            pre = preintegrate(bundle.imu, bias, noise)
            state = predict(prev_state, bundle.imu, noise)
        else:
            state = FullState(prev_state.rotation, prev_state.position, prev_state.velocity,
                              prev_state.bias_acc, prev_state.bias_gyro, bundle.t_frame)
    return Keyframe(bundle.t_frame, tsm, pre, state, bundle.index, len(ev), bundle.forced,
                    tuple(inter), bundle.imu)
