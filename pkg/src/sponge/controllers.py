"""Central coordinator laws for the at-least and exact regulation modes.

Both laws emit one global signal per tick, computed from the fleet's aggregate
dissipation reported at the end of the previous tick. The error is measured
against the window total by default (``tracking="total"``), or against the
uniform within-window trajectory (``tracking="trajectory"``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from sponge.targets import TargetTrajectory


class SignalKind(enum.Enum):
    MODE_PROBABILITY = "p"
    FREE = "free"
    CONGESTION = "congestion"


@dataclass(frozen=True)
class BroadcastSignal:
    kind: SignalKind
    tick: int
    p: float | None = None

    def __post_init__(self):
        if self.kind is SignalKind.MODE_PROBABILITY and not (self.p is not None and 0.0 <= self.p <= 1.0):
            raise ValueError(f"mode probability must lie in [0, 1], got {self.p}")

    @classmethod
    def probability(cls, p: float, tick: int) -> "BroadcastSignal":
        return cls(SignalKind.MODE_PROBABILITY, tick, p)

    @classmethod
    def free(cls, tick: int) -> "BroadcastSignal":
        return cls(SignalKind.FREE, tick)

    @classmethod
    def congestion(cls, tick: int) -> "BroadcastSignal":
        return cls(SignalKind.CONGESTION, tick)

    @property
    def effective_p(self) -> float | None:
        """Probability a vehicle acting on this signal uses; ``None`` for congestion events."""
        if self.kind is SignalKind.MODE_PROBABILITY:
            return self.p
        if self.kind is SignalKind.FREE:
            return 0.5
        return None


class ControllerMode(enum.Enum):
    SPONGE = "sponge"
    EXACT = "exact"


TRACKING_MODES = ("total", "trajectory")


# Gains are given relative to the window target: kp = KP / target_total, ki = KI / target_total.
DEFAULT_SPONGE_KP = 50.0
DEFAULT_EXACT_KP = 20.0
DEFAULT_EXACT_KI = 0.8  # 1/s
DEFAULT_SPONGE_P_MIN = 0.02


@dataclass
class ControllerState:
    mode: ControllerMode
    reference: TargetTrajectory
    kp: float  # 1/kWh
    ki: float = 0.0  # 1/(kWh s)
    integral_error: float = 0.0  # kWh s
    tracking: str = "total"
    p_min: float = 0.0  # proportional law only: probability requested for any positive gap

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("controller gains must be non-negative")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError(f"p_min must lie in [0, 1], got {self.p_min}")
        if self.tracking not in TRACKING_MODES:
            raise ValueError(f"tracking must be one of {TRACKING_MODES}, got {self.tracking!r}")

    def setpoint(self, tick: int) -> float:
        if self.tracking == "total":
            return self.reference.target_total
        return self.reference.cumulative_at_tick(tick)

    @classmethod
    def for_window(cls, mode: ControllerMode, reference: TargetTrajectory, kp_rel: float | None = None,
                   ki_rel: float | None = None, tracking: str = "total",
                   p_min: float | None = None) -> "ControllerState":
        """Fresh state for one window with gains scaled to its target."""
        if kp_rel is None:
            kp_rel = DEFAULT_SPONGE_KP if mode is ControllerMode.SPONGE else DEFAULT_EXACT_KP
        if ki_rel is None:
            ki_rel = 0.0 if mode is ControllerMode.SPONGE else DEFAULT_EXACT_KI
        if p_min is None:
            p_min = DEFAULT_SPONGE_P_MIN if mode is ControllerMode.SPONGE else 0.0
        total = reference.target_total
        if total <= 0:
            return cls(mode, reference, 0.0, 0.0, tracking=tracking, p_min=p_min)
        return cls(mode, reference, kp_rel / total, ki_rel / total, tracking=tracking, p_min=p_min)

    def reset(self, reference: TargetTrajectory) -> None:
        self.reference = reference
        self.integral_error = 0.0


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def proportional_update(state: ControllerState, achieved: float, tick: int) -> BroadcastSignal:
    """At-least regulation: push EV use in proportion to what is still missing.

    The fleet is released (free mode) whenever the setpoint is met. A positive
    ``p_min`` keeps the request away from zero as the gap closes, so the last
    fraction of a kWh is not approached only asymptotically.
    """
    gap = state.setpoint(tick) - achieved
    if gap <= 0:
        return BroadcastSignal.free(tick)
    return BroadcastSignal.probability(_clamp(state.p_min + state.kp * gap), tick)


def pi_update(state: ControllerState, achieved: float, tick: int, dt: float) -> BroadcastSignal:
    """Exact regulation: PI on the setpoint error, hard stop once the window target is met.

    The integral is only accumulated while doing so does not push the output
    further into saturation (conditional-integration anti-windup).
    """
    if achieved >= state.reference.target_total:
        return BroadcastSignal.probability(0.0, tick)
    gap = state.setpoint(tick) - achieved
    integral = state.integral_error + gap * dt
    u = state.kp * gap + state.ki * integral
    if (u > 1.0 and gap > 0) or (u < 0.0 and gap < 0):
        u = state.kp * gap + state.ki * state.integral_error
    else:
        state.integral_error = integral
    return BroadcastSignal.probability(_clamp(u), tick)
