"""Surface of active events and negated time-surface maps.

Events are carried around as numpy structured arrays with ``EVENT_DTYPE``;
the :class:`Event` tuple exists for single-event APIs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

EVENT_DTYPE = np.dtype([("t", "f8"), ("u", "i4"), ("v", "i4"), ("p", "i1")])

# out-of-order events within this window are clamped, anything older aborts
ORDER_TOLERANCE = 1e-3
MAX_VALUE = 255.0


class Event(NamedTuple):
    u: int
    v: int
    t: float
    p: int = 1


class CausalityError(ValueError):
    """A time-surface was requested before an event it would contain."""


class EventOrderError(ValueError):
    pass


def as_event_array(events) -> np.ndarray:
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    out = np.empty(len(events), dtype=EVENT_DTYPE)
    for i, e in enumerate(events):
        out[i] = (e.t, e.u, e.v, e.p)
    return out


@dataclass(frozen=True)
class TsmConfig:
    decay_rate: float = 0.03
    truncation_threshold: float = math.exp(-3.0)
    blur_kernel_size: int = 5
    blur_sigma: float = 1.0

    def __post_init__(self):
        if not self.decay_rate > 0:
            raise ValueError("decay_rate must be positive")
        if not 0.0 <= self.truncation_threshold <= 1.0:
            raise ValueError("truncation_threshold must lie in [0, 1]")
        if self.blur_kernel_size < 1 or self.blur_kernel_size % 2 == 0:
            raise ValueError("blur_kernel_size must be odd and >= 1")
        if self.blur_kernel_size > 1 and not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be positive")


class SurfaceOfActiveEvents:
    """Per-pixel timestamp of the most recent event (``-inf`` if none)."""

    def __init__(self, width: int, height: int):
        self.width = int(width)
        self.height = int(height)
        self.t_last = np.full((self.height, self.width), -np.inf)
        self.latest = -np.inf
        self.rejected = 0

    def copy(self) -> "SurfaceOfActiveEvents":
        other = SurfaceOfActiveEvents(self.width, self.height)
        other.t_last = self.t_last.copy()
        other.latest = self.latest
        other.rejected = self.rejected
        return other

    def update(self, e: Event) -> None:
        if not (0 <= e.u < self.width and 0 <= e.v < self.height):
            self.rejected += 1
            return
        if e.t < self.latest - ORDER_TOLERANCE:
            raise EventOrderError(f"event at t={e.t} is older than {self.latest} beyond tolerance")
        cur = self.t_last[e.v, e.u]
        if e.t > cur:
            self.t_last[e.v, e.u] = e.t
        self.latest = max(self.latest, e.t)

    def update_many(self, events: np.ndarray) -> None:
        events = as_event_array(events)
        if len(events) == 0:
            return
        u, v, t = events["u"], events["v"], events["t"]
        inside = (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        self.rejected += int(np.count_nonzero(~inside))
        u, v, t = u[inside], v[inside], t[inside]
        if len(t) == 0:
            return
        running = np.maximum.accumulate(np.concatenate(([self.latest], t)))[:-1]
        if np.any(t < running - ORDER_TOLERANCE):
            raise EventOrderError("event stream violates ordering tolerance")
        np.maximum.at(self.t_last, (v, u), t)
        self.latest = max(self.latest, float(t.max()))


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if size == 1:
        return np.ones(1)
    r = size // 2
    x = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with replicated borders."""
    if size == 1:
        return image.copy()
    k = gaussian_kernel(size, sigma)
    out = ndimage.correlate1d(image, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


class TimeSurfaceMap:
    """Negated, truncated, scaled and smoothed time surface at ``t_ref``.

    Low values mark edges that fired recently, never-fired pixels hold 255.
    """

    def __init__(self, values: np.ndarray, t_ref: float):
        values = np.asarray(values, dtype=float)
        values.flags.writeable = False
        self.values = values
        self.t_ref = float(t_ref)
        self.height, self.width = values.shape

    def _cells(self, uv: np.ndarray):
        u, v = uv[:, 0], uv[:, 1]
        i = np.clip(np.floor(u).astype(np.intp), 0, self.width - 2)
        j = np.clip(np.floor(v).astype(np.intp), 0, self.height - 2)
        return i, j, u - i, v - j

    def inside(self, uv: np.ndarray) -> np.ndarray:
        u, v = uv[:, 0], uv[:, 1]
        with np.errstate(invalid="ignore"):
            return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)

    def sample_many(self, uv: np.ndarray):
        """Bilinear values at ``(n, 2)`` subpixel locations.

        Returns ``(values, inside)``; outside samples carry ``MAX_VALUE``.
        """
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        ok = self.inside(uv)
        out = np.full(len(uv), MAX_VALUE)
        if np.any(ok):
            i, j, a, b = self._cells(uv[ok])
            f = self.values
            out[ok] = ((1 - a) * (1 - b) * f[j, i] + a * (1 - b) * f[j, i + 1]
                       + (1 - a) * b * f[j + 1, i] + a * b * f[j + 1, i + 1])
        return out, ok

    def gradient_many(self, uv: np.ndarray) -> np.ndarray:
        """Exact derivative of the bilinear interpolant, ``(n, 2)`` as (d/du, d/dv).

        Inside a cell the derivative along one axis is the half-pixel central
        difference interpolated linearly along the other. On a pixel line the
        two adjacent one-sided derivatives are averaged, which reduces to the
        usual central difference. Locations less than one pixel from the border
        get a zero gradient.
        """
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        g = np.zeros((len(uv), 2))
        u, v = uv[:, 0], uv[:, 1]
        with np.errstate(invalid="ignore"):
            ok = (u >= 1) & (u <= self.width - 2) & (v >= 1) & (v <= self.height - 2)
        if not np.any(ok):
            return g
        u, v = u[ok], v[ok]
        f = self.values
        i = np.floor(u).astype(np.intp)
        j = np.floor(v).astype(np.intp)
        a = u - i
        b = v - j

        def du_at(ii, bb, jj):
            return (1 - bb) * (f[jj, ii + 1] - f[jj, ii]) + bb * (f[jj + 1, ii + 1] - f[jj + 1, ii])

        def dv_at(jj, aa, ii):
            return (1 - aa) * (f[jj + 1, ii] - f[jj, ii]) + aa * (f[jj + 1, ii + 1] - f[jj, ii + 1])

        # u <= width - 2 keeps i + 1 valid, same for v
        gu = du_at(i, b, j)
        gv = dv_at(j, a, i)
        on_u = a == 0
        if np.any(on_u):
            k = np.nonzero(on_u)[0]
            gu[k] = 0.5 * (du_at(i[k], b[k], j[k]) + du_at(i[k] - 1, b[k], j[k]))
        on_v = b == 0
        if np.any(on_v):
            k = np.nonzero(on_v)[0]
            gv[k] = 0.5 * (dv_at(j[k], a[k], i[k]) + dv_at(j[k] - 1, a[k], i[k]))
        g[ok, 0] = gu
        g[ok, 1] = gv
        return g

    def sample(self, x):
        """Value at one subpixel location, ``None`` when out of view."""
        vals, ok = self.sample_many(np.asarray(x, dtype=float)[None, :])
        return float(vals[0]) if ok[0] else None

    def gradient(self, x) -> np.ndarray:
        return self.gradient_many(np.asarray(x, dtype=float)[None, :])[0]


def raw_time_surface(t_last: np.ndarray, t: float, decay_rate: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(-(t - t_last) / decay_rate)


def build_tsm(sae: SurfaceOfActiveEvents, t: float, cfg: TsmConfig = TsmConfig()) -> TimeSurfaceMap:
    if t < sae.latest - 1e-12:
        raise CausalityError(f"TSM time {t} precedes the latest event at {sae.latest}")
    raw = raw_time_surface(sae.t_last, t, cfg.decay_rate)
    raw[raw < cfg.truncation_threshold] = 0.0
    values = MAX_VALUE * (1.0 - raw)
    values = gaussian_blur(values, cfg.blur_kernel_size, cfg.blur_sigma)
    return TimeSurfaceMap(values, t)


def write_pgm(tsm: TimeSurfaceMap, path) -> None:
    """Binary 8-bit PGM, row-major, maxval 255."""
    img = np.clip(np.rint(tsm.values), 0, 255).astype(np.uint8)
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{tsm.width} {tsm.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)
