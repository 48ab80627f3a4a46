"""Ground-truth trajectory generation and kinematic extrapolation.

Trajectories are analytic: the velocity and acceleration fields returned by
:func:`sample_truth` are the exact derivatives of the position law, so
extrapolation error measured against them is purely a property of the
predictor, never of the generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import RangeError, ValidationError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle into [-pi, pi)."""
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    if wrapped >= math.pi:  # float modulo can land exactly on the modulus
        wrapped -= TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, wrapped into [-pi, pi)."""
    return wrap_angle(a - b)


class Order(str, Enum):
    FIRST = "first"
    SECOND = "second"


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {arr}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EntityState:
    """Kinematic snapshot: the unit of truth and of transmission."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    orientation: float = 0.0
    angular_rate: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        object.__setattr__(self, "acceleration", _vec3(self.acceleration, "acceleration"))
        for name in ("orientation", "angular_rate", "time"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.time < 0.0:
            raise ValidationError(f"time must be non-negative, got {self.time}")
        object.__setattr__(self, "orientation", wrap_angle(self.orientation))


TRAJECTORY_KINDS = (
    "constant-velocity",
    "constant-acceleration",
    "sinusoid-weave",
    "circular",
    "waypoint-script",
)


@dataclass(frozen=True)
class Trajectory:
    """Analytic motion law: kind plus a kind-specific numeric parameter record."""

    kind: str
    params: Mapping[str, object]
    duration: float
    tick: float = 0.1

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValidationError(f"unknown trajectory kind {self.kind!r}")
        if not (self.tick > 0.0 and math.isfinite(self.tick)):
            raise ValidationError(f"tick must be positive, got {self.tick}")
        if not (self.duration >= self.tick and math.isfinite(self.duration)):
            raise ValidationError(f"duration must be >= tick, got {self.duration}")
        object.__setattr__(self, "params", dict(self.params))
        sample_truth(self, 0.0)  # fail fast on malformed parameters


def _p(params: Mapping[str, object], key: str, default=None):
    if key in params:
        return params[key]
    if default is not None:
        return default
    raise ValidationError(f"trajectory parameters missing {key!r}")


def _theta_law(params: Mapping[str, object], t: float) -> tuple[float, float]:
    """Default orientation law: constant angular rate."""
    theta0 = float(_p(params, "theta0", 0.0))
    omega = float(_p(params, "omega", 0.0))
    return theta0 + omega * t, omega


def sample_truth(traj: Trajectory, t: float) -> EntityState:
    """Exact entity state at time t in [0, duration]."""
    tol = 1e-9 * max(1.0, traj.duration)
    if t < -tol or t > traj.duration + tol:
        raise RangeError(f"t={t} outside [0, {traj.duration}]")
    t = min(max(t, 0.0), traj.duration)
    params = traj.params
    kind = traj.kind

    if kind == "constant-velocity":
        p0 = np.asarray(_p(params, "p0"), dtype=float)
        v = np.asarray(_p(params, "v"), dtype=float)
        pos, vel, acc = p0 + v * t, v, np.zeros(3)
        theta, omega = _theta_law(params, t)

    elif kind == "constant-acceleration":
        p0 = np.asarray(_p(params, "p0"), dtype=float)
        v0 = np.asarray(_p(params, "v0"), dtype=float)
        a = np.asarray(_p(params, "a"), dtype=float)
        pos = p0 + v0 * t + 0.5 * a * t * t
        vel = v0 + a * t
        acc = a
        theta, omega = _theta_law(params, t)

    elif kind == "sinusoid-weave":
        p0 = np.asarray(_p(params, "p0", [0.0, 0.0, 0.0]), dtype=float)
        drift = np.asarray(_p(params, "drift", [0.0, 0.0, 0.0]), dtype=float)
        amp = np.asarray(_p(params, "amplitude"), dtype=float)
        freq = float(_p(params, "freq"))
        phase = float(_p(params, "phase", 0.0))
        arg = freq * t + phase
        pos = p0 + drift * t + amp * math.sin(arg)
        vel = drift + amp * freq * math.cos(arg)
        acc = -amp * freq * freq * math.sin(arg)
        # Yaw may follow the weave so that heading carries the weave phase.
        yaw_amp = float(_p(params, "yaw_amp", 0.0))
        yaw_phase = float(_p(params, "yaw_phase", 0.0))
        theta0 = float(_p(params, "theta0", 0.0))
        omega0 = float(_p(params, "omega", 0.0))
        theta = theta0 + omega0 * t + yaw_amp * math.sin(arg + yaw_phase)
        omega = omega0 + yaw_amp * freq * math.cos(arg + yaw_phase)

    elif kind == "circular":
        center = np.asarray(_p(params, "center", [0.0, 0.0, 0.0]), dtype=float)
        radius = float(_p(params, "radius"))
        om = float(_p(params, "omega"))
        phase0 = float(_p(params, "phase0", 0.0))
        ang = om * t + phase0
        c, s = math.cos(ang), math.sin(ang)
        pos = center + radius * np.array([c, s, 0.0])
        vel = radius * om * np.array([-s, c, 0.0])
        acc = -radius * om * om * np.array([c, s, 0.0])
        # Heading = velocity direction; its rate is exactly om.
        theta = ang + (0.5 * math.pi if om >= 0 else -0.5 * math.pi)
        omega = om

    else:  # waypoint-script
        wps = _p(params, "waypoints")
        times = np.asarray([w[0] for w in wps], dtype=float)
        points = np.asarray([w[1:4] for w in wps], dtype=float)
        if len(times) < 1 or np.any(np.diff(times) <= 0):
            raise ValidationError("waypoints need strictly increasing times")
        if t <= times[0]:
            pos, vel = points[0], np.zeros(3)
        elif t >= times[-1]:
            pos, vel = points[-1], np.zeros(3)
        else:
            i = int(np.searchsorted(times, t, side="right")) - 1
            span = times[i + 1] - times[i]
            frac = (t - times[i]) / span
            vel = (points[i + 1] - points[i]) / span
            pos = points[i] + frac * (points[i + 1] - points[i])
        acc = np.zeros(3)
        theta, omega = _theta_law(params, t)

    return EntityState(pos, vel, acc, wrap_angle(theta), omega, t)


def extrapolate(base: EntityState, t: float, order: Order = Order.SECOND) -> EntityState:
    """Project a state forward to time t by first- or second-order kinematics.

    First order advances position along the stored velocity; second order adds
    the half-acceleration-delta-squared term and advances velocity as well.
    Orientation is always advanced at the stored angular rate (first order)
    and re-wrapped.
    """
    dt = t - base.time
    if dt < 0.0:
        raise RangeError(f"cannot extrapolate backwards: t={t} < base.time={base.time}")
    order = Order(order)
    if order is Order.FIRST:
        pos = base.position + base.velocity * dt
        vel = base.velocity
    else:
        pos = base.position + base.velocity * dt + 0.5 * base.acceleration * dt * dt
        vel = base.velocity + base.acceleration * dt
    theta = wrap_angle(base.orientation + base.angular_rate * dt)
    return EntityState(pos, vel, base.acceleration, theta, base.angular_rate, t)


def max_speed_bound(traj: Trajectory) -> float:
    """Analytic upper bound on ||velocity|| over the trajectory."""
    params = traj.params
    if traj.kind == "constant-velocity":
        return float(np.linalg.norm(np.asarray(_p(params, "v"), dtype=float)))
    if traj.kind == "constant-acceleration":
        v0 = np.asarray(_p(params, "v0"), dtype=float)
        a = np.asarray(_p(params, "a"), dtype=float)
        return float(np.linalg.norm(v0) + np.linalg.norm(a) * traj.duration)
    if traj.kind == "sinusoid-weave":
        drift = np.asarray(_p(params, "drift", [0.0, 0.0, 0.0]), dtype=float)
        amp = np.asarray(_p(params, "amplitude"), dtype=float)
        freq = float(_p(params, "freq"))
        return float(np.linalg.norm(drift) + np.linalg.norm(amp) * abs(freq))
    if traj.kind == "circular":
        return abs(float(_p(params, "radius"))) * abs(float(_p(params, "omega")))
    wps = _p(params, "waypoints")
    times = np.asarray([w[0] for w in wps], dtype=float)
    points = np.asarray([w[1:4] for w in wps], dtype=float)
    if len(times) < 2:
        return 0.0
    seg_v = np.diff(points, axis=0) / np.diff(times)[:, None]
    return float(np.max(np.linalg.norm(seg_v, axis=1)))


def accel_deviation_bound(traj: Trajectory, order: Order = Order.SECOND) -> float:
    """Analytic bound on ||A_true(t) - A_model|| for a model refreshed anywhere.

    For a second-order model the held acceleration is some earlier true value,
    so the deviation is bounded by the acceleration's total swing; a
    first-order model holds zero acceleration, so the bound is the peak
    magnitude itself.
    """
    params = traj.params
    if traj.kind in ("constant-velocity", "waypoint-script"):
        peak = 0.0
    elif traj.kind == "constant-acceleration":
        peak = float(np.linalg.norm(np.asarray(_p(params, "a"), dtype=float)))
    elif traj.kind == "sinusoid-weave":
        amp = np.asarray(_p(params, "amplitude"), dtype=float)
        freq = float(_p(params, "freq"))
        peak = float(np.linalg.norm(amp)) * freq * freq
    else:  # circular
        peak = abs(float(_p(params, "radius"))) * float(_p(params, "omega")) ** 2
    if Order(order) is Order.FIRST:
        return peak
    if traj.kind == "constant-acceleration":
        return 0.0  # held acceleration equals the true constant
    return 2.0 * peak
