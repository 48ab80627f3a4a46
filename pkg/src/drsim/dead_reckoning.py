"""Sender-side update gating and receiver-side remote-entity reconstruction.

The sender runs a mirror of the receiver's predictor and emits an update only
when the mirror deviates from truth beyond the configured thresholds, or when
the heartbeat timer expires. The receiver extrapolates between updates and
either snaps to an arriving update or blends toward it over a short window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError, ValidationError
from .kinematics import EntityState, Order, angle_diff, extrapolate, wrap_angle

_TIME_EPS = 1e-9

CONVERGENCE_MODES = ("snap", "blend")
PREDICTOR_KINDS = ("polynomial", "anfis")


@dataclass
class DrConfig:
    th_pos: float = 1.0
    th_or: float = math.inf
    heartbeat: float = 5.0
    order: Order = Order.SECOND
    convergence: str = "snap"
    blend_window: float = 0.5
    predictor: str = "polynomial"
    anfis_bundle: object = None

    def __post_init__(self):
        if math.isnan(self.th_pos) or self.th_pos < 0.0:
            raise ValidationError(f"th_pos must be >= 0, got {self.th_pos}")
        if math.isnan(self.th_or) or self.th_or < 0.0:
            raise ValidationError(f"th_or must be >= 0, got {self.th_or}")
        if not (math.isfinite(self.heartbeat) and self.heartbeat > 0.0):
            raise ValidationError(f"heartbeat must be positive, got {self.heartbeat}")
        self.order = Order(self.order)
        if self.convergence not in CONVERGENCE_MODES:
            raise ValidationError(f"unknown convergence mode {self.convergence!r}")
        if self.convergence == "blend" and not self.blend_window > 0.0:
            raise ValidationError("blend window must be positive")
        if self.predictor not in PREDICTOR_KINDS:
            raise ValidationError(f"unknown predictor {self.predictor!r}")
        if self.predictor == "anfis" and self.anfis_bundle is None:
            raise ValidationError("anfis predictor requires a trained bundle")


@dataclass(frozen=True)
class UpdateMessage:
    """The only thing that crosses the simulated network."""

    entity_id: str
    state: EntityState
    seq: int
    sent_at: float

    def __post_init__(self):
        if self.seq < 0:
            raise ValidationError(f"seq must be >= 0, got {self.seq}")
        if abs(self.sent_at - self.state.time) > _TIME_EPS:
            raise ValidationError(
                f"sent_at={self.sent_at} must equal state.time={self.state.time}"
            )


def predict(state: EntityState, t: float, config: DrConfig) -> EntityState:
    """The shared prediction both sender mirror and receiver use."""
    if config.predictor == "anfis":
        base = extrapolate(state, t, Order.SECOND)
        pos = config.anfis_bundle.predict([state], t - state.time)
        return EntityState(
            pos, base.velocity, base.acceleration, base.orientation, base.angular_rate, t
        )
    return extrapolate(state, t, config.order)


@dataclass
class SenderModel:
    config: DrConfig
    entity_id: str = "entity-0"
    last_sent: UpdateMessage | None = None
    next_seq: int = 0
    heartbeat_emissions: int = 0
    threshold_emissions: int = 0
    v_dev_max: float = 0.0
    _last_now: float = field(default=-math.inf, repr=False)

    def step(self, truth: EntityState, now: float) -> UpdateMessage | None:
        """Gate test at one tick; returns the emitted update or None."""
        if abs(now - truth.time) > _TIME_EPS:
            raise ValidationError(f"now={now} must match truth.time={truth.time}")
        if now < self._last_now - _TIME_EPS:
            raise RangeError(f"sender time regressed: {now} < {self._last_now}")
        self._last_now = now

        reason = None
        if self.last_sent is None:
            reason = "initial"
        else:
            mirror = predict(self.last_sent.state, now, self.config)
            dev_pos = float(np.linalg.norm(truth.position - mirror.position))
            dev_or = abs(angle_diff(truth.orientation, mirror.orientation))
            if dev_pos >= self.config.th_pos or dev_or >= self.config.th_or:
                reason = "threshold"
            elif now - self.last_sent.sent_at >= self.config.heartbeat - _TIME_EPS:
                reason = "heartbeat"
            if reason is not None:
                v_dev = float(np.linalg.norm(truth.velocity - mirror.velocity))
                self.v_dev_max = max(self.v_dev_max, v_dev)

        if reason is None:
            return None
        msg = UpdateMessage(self.entity_id, truth, self.next_seq, now)
        self.last_sent = msg
        self.next_seq += 1
        if reason == "heartbeat":
            self.heartbeat_emissions += 1
        elif reason == "threshold":
            self.threshold_emissions += 1
        return msg


@dataclass
class ReceiverModel:
    config: DrConfig
    last_update: UpdateMessage | None = None
    last_seq: int = -1
    stale_discarded: int = 0
    _blend_offset_pos: np.ndarray | None = None
    _blend_offset_or: float = 0.0
    _blend_start: float = 0.0
    _blend_until: float = -math.inf
    _last_read: float = field(default=-math.inf, repr=False)

    def apply(self, msg: UpdateMessage, now: float) -> None:
        """Apply an arriving update; stale sequence numbers are discarded."""
        if now < msg.sent_at - _TIME_EPS:
            raise ValidationError(f"delivery at {now} precedes send at {msg.sent_at}")
        if msg.seq <= self.last_seq:
            self.stale_discarded += 1
            return
        if self.config.convergence == "blend" and self.last_update is not None:
            shown = self.read(now)
            target = predict(msg.state, now, self.config)
            self._blend_offset_pos = shown.position - target.position
            self._blend_offset_or = angle_diff(shown.orientation, target.orientation)
            self._blend_start = now
            self._blend_until = now + self.config.blend_window
        self.last_update = msg
        self.last_seq = msg.seq

    def read(self, now: float) -> EntityState | None:
        """Displayed state at now, or None before the first update."""
        if now < self._last_read - _TIME_EPS:
            raise RangeError(f"receiver read time regressed: {now} < {self._last_read}")
        self._last_read = now
        if self.last_update is None:
            return None
        state = predict(self.last_update.state, max(now, self.last_update.state.time), self.config)
        if self._blend_offset_pos is not None and now < self._blend_until:
            # Residual offset from the pre-update display decays linearly to zero.
            remain = 1.0 - (now - self._blend_start) / self.config.blend_window
            pos = state.position + self._blend_offset_pos * remain
            theta = wrap_angle(state.orientation + self._blend_offset_or * remain)
            return EntityState(
                pos, state.velocity, state.acceleration, theta, state.angular_rate, now
            )
        return state


def sender_step(model: SenderModel, truth: EntityState, now: float) -> UpdateMessage | None:
    return model.step(truth, now)


def receiver_apply(model: ReceiverModel, msg: UpdateMessage, now: float) -> None:
    model.apply(msg, now)


def receiver_read(model: ReceiverModel, now: float) -> EntityState | None:
    return model.read(now)
