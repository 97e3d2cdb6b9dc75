"""Time-of-flight trigger logic, band closure timing, and the stochastic grasp model.

Grasp outcomes decompose into an independent mechanical-success draw and a
hold-through-window draw, with rates calibrated so the composite default
reproduces the observed flight statistics: 0.85 mechanical success times
15/17 hold-through gives a 0.75 overall hold rate. An approach faster than
the sufficiency limit or a trunk outside the graspable radius band slips
immediately regardless of the mechanical draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .sim_core import TofSample, TreeModel


class NotTriggered(RuntimeError):
    """Grasp resolution requested while the gripper is not in Triggered."""


class IllegalTransition(RuntimeError):
    """A gripper state change outside the allowed sequence."""


@dataclass(frozen=True)
class GripperParams:
    trigger_distance: float = 0.15  # m, ToF threshold that fires the bands
    closure_time: float = 0.006  # s, band snap-around time
    pivot_limit: float = math.radians(120.0)  # rad, pitch-down brace stop
    graspable_radius_range: tuple = (0.05, 0.40)  # m

    def __post_init__(self):
        if not self.trigger_distance > 0.0:
            raise ValueError("trigger_distance must be positive")
        if not self.closure_time > 0.0:
            raise ValueError("closure_time must be positive")
        lo, hi = self.graspable_radius_range
        if not (0.0 < lo < hi):
            raise ValueError("graspable_radius_range must be positive and ordered")


@dataclass(frozen=True)
class GraspModel:
    p_mechanical: float = 0.85  # bands deploy and latch correctly
    p_hold: float = 15.0 / 17.0  # spines keep hold through the window, given engagement
    spine_sharpness: float = 1.0  # 1 = fresh spines, 0 = filed dull
    v_sufficient_max: float = 0.5  # m/s, upper edge of the velocity sufficiency region
    slip_window: float = 10.0  # s, observation window for stochastic slips

    def __post_init__(self):
        for p in (self.p_mechanical, self.p_hold, self.spine_sharpness):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if not self.v_sufficient_max > 0.0:
            raise ValueError("v_sufficient_max must be positive")


# --- gripper states ---------------------------------------------------------


@dataclass(frozen=True)
class Stowed:
    pass


@dataclass(frozen=True)
class Armed:
    pass


@dataclass(frozen=True)
class Triggered:
    t_trigger: float


@dataclass(frozen=True)
class Engaged:
    hold_deadline: Optional[float] = None  # scheduled slip time; None holds forever


@dataclass(frozen=True)
class Slipped:
    t_slip: float


@dataclass(frozen=True)
class MechanicalFailure:
    pass


GripperState = Union[Stowed, Armed, Triggered, Engaged, Slipped, MechanicalFailure]

_LEGAL = {
    (Stowed, Armed),
    (Armed, Triggered),
    (Triggered, Engaged),
    (Triggered, Slipped),
    (Triggered, MechanicalFailure),
    (Engaged, Slipped),
}


def validate_transition(old: GripperState, new: GripperState) -> None:
    if (type(old), type(new)) not in _LEGAL:
        raise IllegalTransition(f"{type(old).__name__} -> {type(new).__name__}")


def check_trigger(tof: TofSample, state: GripperState, params: GripperParams) -> bool:
    """True when an armed gripper sees a valid range at or under the threshold."""
    if not isinstance(state, Armed):
        raise NotTriggered("trigger check requires an Armed gripper")
    return bool(tof.valid and tof.range <= params.trigger_distance)


def resolve_grasp(
    t_trigger: float,
    impact_speed_normal: float,
    tree: TreeModel,
    model: GraspModel,
    rng: np.random.Generator,
    params: GripperParams = GripperParams(),
) -> GripperState:
    """Outcome of a closure that finished closure_time after the trigger.

    Draw order is fixed (mechanical, then hold, then slip time) so a seeded
    generator reproduces outcomes exactly.
    """
    if impact_speed_normal < 0.0:
        raise ValueError("impact speed must be non-negative")
    t_closed = t_trigger + params.closure_time
    if rng.random() >= model.p_mechanical:
        return MechanicalFailure()
    lo, hi = params.graspable_radius_range
    if impact_speed_normal > model.v_sufficient_max or not (lo <= tree.radius <= hi):
        return Slipped(t_slip=t_closed)
    hold_p = model.p_hold * model.spine_sharpness
    if rng.random() < 1.0 - hold_p:
        slip_at = t_closed + rng.uniform(0.0, model.slip_window)
        return Engaged(hold_deadline=slip_at)
    return Engaged(hold_deadline=None)


class GripperUnit:
    """Stateful wrapper enforcing the legal state sequence for one trial.

    The trigger requires a manual re-arm between trials: a fresh unit starts
    Stowed and must be armed before check_trigger or a trigger can happen.
    """

    def __init__(self, params: GripperParams = GripperParams()):
        self.params = params
        self.state: GripperState = Stowed()

    def arm(self) -> None:
        validate_transition(self.state, Armed())
        self.state = Armed()

    def poll_trigger(self, tof: TofSample) -> bool:
        """Fire the bands when the trigger condition is met; returns True on fire."""
        if not isinstance(self.state, Armed):
            return False
        if check_trigger(tof, self.state, self.params):
            new = Triggered(t_trigger=tof.timestamp)
            validate_transition(self.state, new)
            self.state = new
            return True
        return False

    def closure_complete(self, now: float) -> bool:
        return (
            isinstance(self.state, Triggered)
            and now >= self.state.t_trigger + self.params.closure_time
        )

    def resolve(self, impact_speed_normal, tree, model, rng) -> GripperState:
        if not isinstance(self.state, Triggered):
            raise NotTriggered("resolve called out of sequence")
        new = resolve_grasp(
            self.state.t_trigger, impact_speed_normal, tree, model, rng, self.params
        )
        validate_transition(self.state, new)
        self.state = new
        return new

    def slip_due(self, now: float) -> bool:
        return (
            isinstance(self.state, Engaged)
            and self.state.hold_deadline is not None
            and now >= self.state.hold_deadline
        )

    def slip(self, now: float) -> GripperState:
        new = Slipped(t_slip=now)
        validate_transition(self.state, new)
        self.state = new
        return new
