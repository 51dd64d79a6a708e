"""Movement/performance history tracing: greedy decimation of pose streams
plus the age-window view with alpha fade used by the trajectory geometry.

A sample is kept only when it moved, turned, or aged enough relative to the
last kept sample, so memory grows with actual activity rather than with the
raw pose rate. The cumulative kept sequence is retained for the whole
session; the live view is truncated to a host-adjustable window.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .core import ConfigError, Pose


@dataclass(frozen=True, slots=True)
class FilterParams:
    eps_pos: float = 0.10        # meters
    eps_ang: float = 10.0        # degrees
    t_max: int = 1000            # ms: keep at least one sample per interval
    window: int = 120_000        # ms: live truncation window, host-adjustable
    alpha_fade: int = 10_000     # ms: fade-out span at the old edge of the window


def validate_filter_params(p: FilterParams) -> None:
    for name in ("eps_pos", "eps_ang", "t_max", "window", "alpha_fade"):
        v = getattr(p, name)
        if not v > 0:
            raise ConfigError(name, f"must be positive, got {v!r}")


@dataclass(frozen=True, slots=True)
class TraceSample:
    t: int
    pose: Pose
    fps: float | None  # last known rendering fps; None before first metrics


@dataclass(frozen=True, slots=True)
class WindowSample:
    t: int
    pose: Pose
    fps: float | None
    alpha: float


@dataclass(slots=True)
class TrajectoryTrace:
    params: FilterParams = field(default_factory=FilterParams)
    kept: list[TraceSample] = field(default_factory=list)


def trace_filter(trace: TrajectoryTrace, sample: TraceSample) -> bool:
    """Append `sample` if it clears the keep-predicate; return whether kept.

    Keep iff distance, orientation angle, or elapsed time since the last
    kept sample reaches its threshold. The first sample is always kept;
    samples not newer than the last kept one are dropped.
    """
    if not trace.kept:
        trace.kept.append(sample)
        return True
    last = trace.kept[-1]
    if sample.t <= last.t:
        return False
    p = trace.params
    keep = (
        sample.pose.position.distance_to(last.pose.position) >= p.eps_pos
        or sample.pose.orientation.angle_to(last.pose.orientation) >= p.eps_ang
        or sample.t - last.t >= p.t_max
    )
    if keep:
        trace.kept.append(sample)
    return keep


def truncate_and_alpha(trace: TrajectoryTrace, now: int, params: FilterParams) -> list[WindowSample]:
    """Samples inside the live window, oldest `alpha_fade` ms fading to 0."""
    cutoff = now - params.window
    start = bisect_left(trace.kept, cutoff, key=lambda s: s.t)
    fade = params.alpha_fade
    fade_end = cutoff + fade
    out = []
    append = out.append
    for s in trace.kept[start:]:
        # t >= cutoff here, so the ratio is already clamped from below
        alpha = 1.0 if s.t >= fade_end else (s.t - cutoff) / fade
        append(WindowSample(s.t, s.pose, s.fps, alpha))
    return out


def history_slice(trace: TrajectoryTrace, up_to_t: float) -> list[TraceSample]:
    """Cumulative kept samples with t <= up_to_t (not window-truncated)."""
    if math.isinf(up_to_t):
        return list(trace.kept)
    end = bisect_right(trace.kept, up_to_t, key=lambda s: s.t)
    return trace.kept[:end]
