"""Spatial/temporal coherence measurement for a dead-reckoning run.

Collects the positional/orientation error time series, finds threshold
violation windows, integrates error as a left Riemann sum, checks the
a-priori worst-case error bound, and grades the run against a QoS profile.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dead_reckoning import DrConfig
from .errors import ValidationError
from .kinematics import EntityState, angle_diff
from .netsim import ChannelConfig

_TIME_EPS = 1e-9


def format_sig(x: float) -> str:
    """Stable 9-significant-digit float rendering used in every CSV."""
    return f"{x:.9g}"


@dataclass(frozen=True)
class QosProfile:
    name: str
    max_latency: float
    max_loss: float
    max_error: float = math.inf

    @classmethod
    def tightly_coupled(cls) -> "QosProfile":
        return cls("tightly-coupled", max_latency=0.100, max_loss=0.02)

    @classmethod
    def loosely_coupled(cls) -> "QosProfile":
        return cls("loosely-coupled", max_latency=0.300, max_loss=0.05)

    @classmethod
    def custom(cls, max_latency: float, max_loss: float, max_error: float) -> "QosProfile":
        return cls("custom", max_latency, max_loss, max_error)

    @classmethod
    def from_config(cls, cfg: dict) -> "QosProfile":
        name = cfg.get("name", "custom")
        if name == "tightly-coupled":
            return cls.tightly_coupled()
        if name == "loosely-coupled":
            return cls.loosely_coupled()
        if name == "custom":
            return cls.custom(
                float(cfg["max_latency"]),
                float(cfg["max_loss"]),
                float(cfg.get("max_error", math.inf)),
            )
        raise ValidationError(f"unknown QoS profile {name!r}")


class ErrorSeries:
    """Uniformly spaced (t, positional error, orientation error) samples."""

    def __init__(self, tick: float):
        if not (math.isfinite(tick) and tick > 0.0):
            raise ValidationError(f"tick must be positive, got {tick}")
        self.tick = tick
        self.times: list[float] = []
        self.e_pos: list[float] = []
        self.e_or: list[float] = []

    def __len__(self) -> int:
        return len(self.times)

    def record(self, truth: EntityState, displayed: EntityState) -> None:
        if abs(truth.time - displayed.time) > _TIME_EPS:
            raise ValidationError(
                f"truth at {truth.time} and display at {displayed.time} are misaligned"
            )
        t = truth.time
        if self.times:
            expected = self.times[0] + len(self.times) * self.tick
            if abs(t - expected) > 1e-6 * max(1.0, abs(expected)):
                raise ValidationError(f"sample at {t} breaks the uniform grid (expected {expected})")
        self.times.append(t)
        self.e_pos.append(float(np.linalg.norm(truth.position - displayed.position)))
        self.e_or.append(abs(angle_diff(truth.orientation, displayed.orientation)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,e_pos,e_or\n")
        for t, ep, eo in zip(self.times, self.e_pos, self.e_or):
            buf.write(f"{format_sig(t)},{format_sig(ep)},{format_sig(eo)}\n")
        return buf.getvalue()


def record_error(series: ErrorSeries, truth: EntityState, displayed: EntityState) -> None:
    series.record(truth, displayed)


def integrated_error(series: ErrorSeries) -> float:
    """Left Riemann sum of positional error over the sampled span."""
    if len(series) < 1:
        raise ValidationError("cannot integrate an empty series")
    return float(np.sum(series.e_pos) * series.tick)


@dataclass(frozen=True)
class ViolationWindow:
    start: float
    end: float
    peak: float

    @property
    def length(self) -> float:
        return self.end - self.start


def violation_windows(series: ErrorSeries, th_pos: float) -> list[ViolationWindow]:
    """Maximal contiguous runs of samples with positional error above th_pos."""
    if th_pos < 0.0:
        raise ValidationError(f"th_pos must be >= 0, got {th_pos}")
    windows = []
    start = None
    peak = 0.0
    for t, e in zip(series.times, series.e_pos):
        if e > th_pos:
            if start is None:
                start, peak = t, e
            else:
                peak = max(peak, e)
            end = t
        elif start is not None:
            windows.append(ViolationWindow(start, end, peak))
            start = None
    if start is not None:
        windows.append(ViolationWindow(start, end, peak))
    return windows


@dataclass
class CoherenceReport:
    """Per-run QoS verdict with message accounting."""

    max_error: float = 0.0
    integrated_error: float = 0.0
    violation_windows: list[ViolationWindow] = field(default_factory=list)
    total_violation_time: float = 0.0
    messages_sent: int = 0
    messages_delivered: int = 0
    messages_dropped: int = 0
    bytes_sent: int = 0
    heartbeats: int = 0
    max_prop_delay: float = 0.0
    v_dev_max_send: float = 0.0
    passed: bool = True
    reasons: list[str] = field(default_factory=list)

    CSV_FIELDS = (
        "messages_sent",
        "messages_delivered",
        "messages_dropped",
        "bytes_sent",
        "heartbeats",
        "max_error",
        "integrated_error",
        "violation_count",
        "total_violation_time",
        "max_prop_delay",
        "verdict",
    )

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def to_csv_row(self) -> str:
        return ",".join(
            [
                str(self.messages_sent),
                str(self.messages_delivered),
                str(self.messages_dropped),
                str(self.bytes_sent),
                str(self.heartbeats),
                format_sig(self.max_error),
                format_sig(self.integrated_error),
                str(len(self.violation_windows)),
                format_sig(self.total_violation_time),
                format_sig(self.max_prop_delay),
                "pass" if self.passed else "fail",
            ]
        )

    def to_text(self) -> str:
        lines = [
            f"messages sent        : {self.messages_sent}",
            f"messages delivered   : {self.messages_delivered}",
            f"messages dropped     : {self.messages_dropped}",
            f"bytes sent           : {self.bytes_sent}",
            f"heartbeat refreshes  : {self.heartbeats}",
            f"max position error   : {format_sig(self.max_error)} m",
            f"integrated error     : {format_sig(self.integrated_error)} m*s",
            f"violation windows    : {len(self.violation_windows)}"
            f" (total {format_sig(self.total_violation_time)} s)",
            f"max propagation delay: {format_sig(self.max_prop_delay)} s",
            f"verdict              : {'PASS' if self.passed else 'FAIL'}",
        ]
        lines.extend(f"  - {r}" for r in self.reasons)
        return "\n".join(lines) + "\n"


def check_emax_bound(
    report: CoherenceReport,
    series: ErrorSeries,
    channel: ChannelConfig,
    dr: DrConfig,
    accel_bound: float,
) -> tuple[float, bool]:
    """A-priori worst-case error bound and whether the run respected it.

    The bound stacks the three ways error accumulates: the sender gate lets
    the mirror drift up to th_pos; held-state acceleration mismatch can grow
    error for at most one heartbeat plus one worst-case transit; and the
    velocity mismatch present at a send keeps acting during transit.
    """
    if accel_bound < 0.0:
        raise ValidationError(f"accel bound must be >= 0, got {accel_bound}")
    dt_max = channel.base_delay + channel.jitter
    bound = (
        dr.th_pos
        + 0.5 * accel_bound * (dr.heartbeat + dt_max) ** 2
        + report.v_dev_max_send * dt_max
    )
    return bound, report.max_error <= bound


def verdict(
    report: CoherenceReport, profile: QosProfile, channel: ChannelConfig
) -> tuple[bool, list[str]]:
    """Grade the run's channel and observed error against a QoS profile."""
    reasons = []
    worst_latency = channel.base_delay + channel.jitter
    if worst_latency > profile.max_latency:
        reasons.append(
            f"latency {format_sig(worst_latency)} s exceeds "
            f"{profile.name} bound {format_sig(profile.max_latency)} s"
        )
    if channel.loss > profile.max_loss:
        reasons.append(
            f"loss {format_sig(channel.loss)} exceeds "
            f"{profile.name} bound {format_sig(profile.max_loss)}"
        )
    if math.isfinite(profile.max_error) and report.max_error > profile.max_error:
        reasons.append(
            f"max error {format_sig(report.max_error)} m exceeds "
            f"budget {format_sig(profile.max_error)} m"
        )
    return (not reasons), reasons
