"""Mission finite-state machine, IMU free-fall detector, and recovery reaction.

The FSM is a pure transition function over an input snapshot: all side
effects are returned as actions and events, which makes recorded logs
replayable through the same function. Operator confirmations arrive as
drained messages; human gates are distinct states so they are auditable in
the event log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .gripper import Engaged, GripperState, MechanicalFailure
from .planner import Setpoint, recovery_setpoint
from .sim_core import ImuSample


class AutonomyState(Enum):
    IDLE = "Idle"
    SEARCH_TREE = "SearchTree"
    AWAIT_DETECT_CONFIRM = "AwaitDetectConfirm"
    PLANNING = "Planning"
    FLY_TO_PERCH = "FlyToPerch"
    AWAIT_PERCH_CONFIRM = "AwaitPerchConfirm"
    PERCH_SEQUENCE = "PerchSequence"
    PERCHED = "Perched"
    FREE_FALL_DETECTED = "FreeFallDetected"
    RECOVERING = "Recovering"
    SAFE_HOVER = "SafeHover"
    LANDED = "Landed"
    ABORTED = "Aborted"


TERMINAL_STATES = frozenset({AutonomyState.SAFE_HOVER, AutonomyState.LANDED, AutonomyState.ABORTED})

EVENT_KINDS = frozenset(
    {
        "state_entry",
        "state_exit",
        "start",
        "detect",
        "confirm",
        "plan",
        "arrive",
        "trigger",
        "engage",
        "perched",
        "slip",
        "freefall",
        "recovery_complete",
        "hold_confirmed",
        "timeout",
        "abort",
        "illegal",
    }
)

MILESTONE_KINDS = ("start", "detect", "confirm", "plan", "arrive", "trigger", "engage", "perched")


class IllegalEventError(RuntimeError):
    pass


class ReplayMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    timestamp: float
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"t": self.timestamp, "kind": self.kind, "payload": self.payload}

    @staticmethod
    def from_dict(d: dict) -> "Event":
        return Event(timestamp=d["t"], kind=d["kind"], payload=d.get("payload", {}))


class EventLog:
    """Append-only, timestamp-monotone event record for one trial."""

    def __init__(self):
        self.events: list[Event] = []

    def append(self, event: Event) -> Event:
        if self.events and event.timestamp < self.events[-1].timestamp - 1e-12:
            raise ValueError("event timestamps must be non-decreasing")
        self.events.append(event)
        return event

    def extend(self, events: Iterable[Event]) -> None:
        for e in events:
            self.append(e)

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def milestones(self) -> list[str]:
        return [e.kind for e in self.events if e.kind in MILESTONE_KINDS]


# --- confirm policies --------------------------------------------------------


@dataclass(frozen=True)
class Human:
    pass


@dataclass(frozen=True)
class AutoAccept:
    delay: float = 0.0

    def __post_init__(self):
        if self.delay < 0.0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class AutoReject:
    pass


ConfirmPolicy = Union[Human, AutoAccept, AutoReject]


@dataclass(frozen=True)
class FailureDetectorConfig:
    accel_threshold: float = 7.0  # m/s^2
    window: float = 0.02  # s, trailing mean
    actuation_latency: float = 0.10  # s, accelerometer to motor command
    armed_states: frozenset = frozenset(
        {AutonomyState.PERCH_SEQUENCE, AutonomyState.PERCHED}
    )

    def __post_init__(self):
        if not 0.0 < self.accel_threshold < 9.8:
            raise ValueError("threshold must lie strictly between 0 and g")
        if not self.window > 0.0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class AutonomyConfig:
    confirm_policy: ConfirmPolicy = AutoAccept()
    detector: FailureDetectorConfig = FailureDetectorConfig()
    arrival_tolerance: float = 0.05  # m, at the flight goal
    recovery_position_tolerance: float = 0.2  # m
    recovery_speed_tolerance: float = 0.1  # m/s
    recovery_offset: float = 1.0  # m away from the perch site


# --- detector and recovery ----------------------------------------------------


def detect_freefall(
    imu_history: Sequence[ImuSample], cfg: FailureDetectorConfig, state: AutonomyState
) -> bool:
    """Trailing-window mean of specific-force magnitude below the threshold.

    Armed only in the configured states; elsewhere never fires, so free-flight
    accelerations cannot trip a recovery.
    """
    if state not in cfg.armed_states:
        return False
    if not imu_history:
        return False
    t_now = imu_history[-1].timestamp
    mags = [s.magnitude for s in imu_history if s.timestamp > t_now - cfg.window - 1e-12]
    if not mags:
        return False
    return sum(mags) / len(mags) < cfg.accel_threshold


@dataclass(frozen=True)
class ScheduledRecovery:
    activate_at: float  # detection time plus actuation latency
    setpoint: Setpoint


def recovery_reaction(
    detection_time: float, perch_pose, normal, cfg: AutonomyConfig
) -> ScheduledRecovery:
    """Schedule the setpoint switch one actuation latency after detection."""
    return ScheduledRecovery(
        activate_at=detection_time + cfg.detector.actuation_latency,
        setpoint=recovery_setpoint(perch_pose, normal, cfg.recovery_offset),
    )


# --- the mission FSM ----------------------------------------------------------


@dataclass
class FsmInputs:
    """Snapshot of the world as seen by one control tick."""

    time: float
    start_requested: bool = False
    candidate: Optional[object] = None  # localized PerchCandidate
    track_lost: bool = False
    trajectory_ready: bool = False
    dist_to_goal: float = math.inf
    gripper: Optional[GripperState] = None
    freefall_detected: bool = False
    latency_elapsed: bool = False
    thrust_zero: bool = False
    dist_to_recovery: float = math.inf
    speed: float = 0.0
    grounded: bool = False
    confirms: Tuple[str, ...] = ()
    abort_reason: Optional[str] = None  # reason attached to a loop-injected abort


# messages each state is allowed to consume
_CONSUMES = {
    AutonomyState.AWAIT_DETECT_CONFIRM: {"confirm_detection", "abort"},
    AutonomyState.AWAIT_PERCH_CONFIRM: {"engage_perch", "abort"},
}


def fsm_step(
    state: AutonomyState, inputs: FsmInputs, cfg: AutonomyConfig
) -> Tuple[AutonomyState, list, list]:
    """One pure FSM transition: returns (new_state, events, actions).

    Events are fully formed (timestamped from the inputs); actions are
    directives for the surrounding loop, e.g. "plan_trajectory". At most one
    state transition happens per call.
    """
    t = inputs.time
    events: list[Event] = []
    actions: list[str] = []

    def emit(kind, **payload):
        events.append(Event(timestamp=t, kind=kind, payload=payload))

    # messages not consumable here are logged and ignored
    allowed = _CONSUMES.get(state, {"abort"} if state not in TERMINAL_STATES else set())
    for msg in inputs.confirms:
        if msg not in allowed:
            emit("illegal", message=msg, state=state.value)

    def goto(new_state, action=None):
        emit("state_exit", state=state.value)
        emit("state_entry", state=new_state.value)
        if action:
            actions.append(action)
        return new_state, events, actions

    if state in TERMINAL_STATES:
        return state, events, actions

    if inputs.grounded:
        return goto(AutonomyState.LANDED, "hold_position")

    if "abort" in inputs.confirms:
        emit("abort", reason=inputs.abort_reason or "operator")
        return goto(AutonomyState.ABORTED, "hold_position")

    if state is AutonomyState.IDLE:
        if inputs.start_requested:
            emit("start")
            return goto(AutonomyState.SEARCH_TREE)

    elif state is AutonomyState.SEARCH_TREE:
        if inputs.candidate is not None:
            cand = inputs.candidate
            emit(
                "detect",
                target=[round(float(x), 6) for x in cand.target_pose],
                diameter=round(float(cand.diameter_est), 6),
            )
            return goto(AutonomyState.AWAIT_DETECT_CONFIRM, "hold_position")

    elif state is AutonomyState.AWAIT_DETECT_CONFIRM:
        if inputs.track_lost:
            return goto(AutonomyState.SEARCH_TREE)
        if isinstance(cfg.confirm_policy, AutoReject):
            emit("abort", reason="detection_rejected")
            return goto(AutonomyState.ABORTED, "hold_position")
        if "confirm_detection" in inputs.confirms:
            emit("confirm", gate="detection")
            return goto(AutonomyState.PLANNING, "plan_trajectory")

    elif state is AutonomyState.PLANNING:
        if inputs.track_lost:
            emit("abort", reason="track_lost")
            return goto(AutonomyState.ABORTED, "hold_position")
        if inputs.trajectory_ready:
            emit("plan")
            return goto(AutonomyState.FLY_TO_PERCH, "follow_trajectory")

    elif state is AutonomyState.FLY_TO_PERCH:
        if inputs.track_lost:
            emit("abort", reason="track_lost")
            return goto(AutonomyState.ABORTED, "hold_position")
        if inputs.dist_to_goal <= cfg.arrival_tolerance:
            emit("arrive", distance=round(float(inputs.dist_to_goal), 6))
            return goto(AutonomyState.AWAIT_PERCH_CONFIRM, "hold_position")

    elif state is AutonomyState.AWAIT_PERCH_CONFIRM:
        if isinstance(cfg.confirm_policy, AutoReject):
            emit("abort", reason="perch_rejected")
            return goto(AutonomyState.ABORTED, "hold_position")
        if "engage_perch" in inputs.confirms:
            emit("confirm", gate="perch")
            return goto(AutonomyState.PERCH_SEQUENCE, "begin_perch_sequence")

    elif state is AutonomyState.PERCH_SEQUENCE:
        if inputs.freefall_detected:
            emit("freefall")
            return goto(AutonomyState.FREE_FALL_DETECTED, "schedule_recovery")
        if isinstance(inputs.gripper, MechanicalFailure):
            emit("abort", reason="mechanical_failure")
            return goto(AutonomyState.ABORTED, "hold_position")
        if isinstance(inputs.gripper, Engaged) and inputs.thrust_zero:
            emit("perched")
            return goto(AutonomyState.PERCHED)

    elif state is AutonomyState.PERCHED:
        if inputs.freefall_detected:
            emit("freefall")
            return goto(AutonomyState.FREE_FALL_DETECTED, "schedule_recovery")

    elif state is AutonomyState.FREE_FALL_DETECTED:
        if inputs.latency_elapsed:
            return goto(AutonomyState.RECOVERING, "activate_recovery")

    elif state is AutonomyState.RECOVERING:
        if (
            inputs.dist_to_recovery <= cfg.recovery_position_tolerance
            and inputs.speed < cfg.recovery_speed_tolerance
        ):
            emit("recovery_complete", distance=round(float(inputs.dist_to_recovery), 6))
            return goto(AutonomyState.SAFE_HOVER, "hold_position")

    else:  # pragma: no cover - exhaustive state handling
        raise ValueError(f"unhandled state {state}")

    return state, events, actions


# --- log replay ----------------------------------------------------------------


def replay_events(events: Sequence[Event], cfg: AutonomyConfig) -> list[AutonomyState]:
    """Re-derive the state sequence by feeding logged causes through fsm_step.

    Walks the log, synthesizing the input snapshot that each milestone
    encodes, and verifies every recorded state entry against the transition
    the FSM actually takes. Returns the reconstructed state sequence.
    """

    @dataclass
    class _Cand:
        target_pose: np.ndarray
        diameter_est: float

    state = AutonomyState.IDLE
    sequence = [state]
    pending = FsmInputs(time=0.0)
    for event in events:
        k = event.kind
        p = event.payload
        if k == "start":
            pending.start_requested = True
        elif k == "detect":
            pending.candidate = _Cand(np.asarray(p["target"]), p["diameter"])
        elif k == "confirm":
            pending.confirms += (
                "confirm_detection" if p.get("gate") == "detection" else "engage_perch",
            )
        elif k == "plan":
            pending.trajectory_ready = True
        elif k == "arrive":
            pending.dist_to_goal = p.get("distance", 0.0)
        elif k == "perched":
            pending.gripper = Engaged()
            pending.thrust_zero = True
        elif k == "freefall":
            pending.freefall_detected = True
        elif k == "recovery_complete":
            pending.dist_to_recovery = p.get("distance", 0.0)
            pending.speed = 0.0
        elif k == "abort":
            reason = p.get("reason")
            if reason in ("detection_rejected", "perch_rejected"):
                pass  # the configured AutoReject policy re-derives these
            elif reason == "mechanical_failure":
                pending.gripper = MechanicalFailure()
            elif reason == "track_lost":
                pending.track_lost = True
            else:
                pending.confirms += ("abort",)
                if reason != "operator":
                    pending.abort_reason = reason
        elif k == "state_entry":
            expected = AutonomyState(p["state"])
            if expected is AutonomyState.RECOVERING:
                pending.latency_elapsed = True
            if expected is AutonomyState.LANDED:
                pending.grounded = True
            pending.time = event.timestamp
            new_state, _, _ = fsm_step(state, pending, cfg)
            if new_state is not expected:
                raise ReplayMismatch(
                    f"log enters {expected.value} but FSM stepped {state.value} -> {new_state.value}"
                )
            state = new_state
            sequence.append(state)
            pending = FsmInputs(time=event.timestamp)
    return sequence
