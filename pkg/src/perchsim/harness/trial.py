"""Single-trial execution: the full sense-detect-confirm-plan-fly-perch loop.

The loop ticks at the control rate with physics substeps, drives the mission
FSM with an input snapshot each tick, and owns the side effects the FSM
requests (planning, arming, the gentle-perch ramp, the recovery switch).
Everything stochastic draws from per-subsystem generators spawned from the
trial seed, so a seed fully determines the event log.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .. import quat
from ..autonomy import (
    AutoAccept,
    AutonomyState,
    Event,
    EventLog,
    FsmInputs,
    detect_freefall,
    fsm_step,
    recovery_reaction,
)
from ..control import ControlCommand, gentle_perch_thrust, track
from ..gripper import Engaged, GripperUnit, MechanicalFailure, Slipped, Triggered
from ..perception import TrackLost, detect_perch_site, localize_candidate, render_depth, track_candidate
from ..planner import (
    DegenerateTrajectory,
    InfeasibleLimits,
    Setpoint,
    plan_perch_trajectory,
    sample,
)
from ..sim_core import (
    FreeFall,
    FreeFlight,
    Grounded,
    PerchedPivot,
    enter_perched_pivot,
    pivot_resting,
    read_imu,
    read_tof,
    release_to_freefall,
    step_world,
)
from .scenario import ConfigError, ScenarioConfig, scenario_hash

S = AutonomyState

PERCEPTION_STATES = frozenset(
    {S.SEARCH_TREE, S.AWAIT_DETECT_CONFIRM, S.PLANNING, S.FLY_TO_PERCH, S.AWAIT_PERCH_CONFIRM}
)


class Outcome(Enum):
    PERCH_SUCCESS = "PerchSuccess"
    SPINE_SLIP = "SpineSlip"
    MECHANICAL_FAILURE = "MechanicalFailure"
    RECOVERY_SUCCESS = "RecoverySuccess"
    RECOVERY_FAILURE = "RecoveryFailure"
    DETECT_FAILURE = "DetectFailure"
    PLAN_FAILURE = "PlanFailure"
    TIMEOUT = "Timeout"
    ABORTED = "Aborted"


def classify_outcome(events) -> Outcome:
    """Pure classification of a trial from its event log alone."""
    kinds = [e.kind for e in events]
    reasons = {e.payload.get("reason") for e in events if e.kind == "abort"}
    if "hold_confirmed" in kinds:
        return Outcome.PERCH_SUCCESS
    if "mechanical_failure" in reasons:
        return Outcome.MECHANICAL_FAILURE
    if "slip" in kinds:
        if "recovery_complete" in kinds:
            return Outcome.RECOVERY_SUCCESS
        if "freefall" in kinds:
            return Outcome.RECOVERY_FAILURE
        return Outcome.SPINE_SLIP
    if "detect_timeout" in reasons:
        return Outcome.DETECT_FAILURE
    if "plan_failure" in reasons:
        return Outcome.PLAN_FAILURE
    if reasons:
        return Outcome.ABORTED
    if "timeout" in kinds:
        return Outcome.TIMEOUT
    return Outcome.TIMEOUT


@dataclass
class TrialResult:
    seed: int
    scenario_hash: str
    outcome: Outcome
    final_state: AutonomyState
    duration: float
    timings: dict = field(default_factory=dict)  # detect/arrive/trigger/engage/...
    max_altitude_loss: float = 0.0
    safe_hover_distance: Optional[float] = None
    events: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # per-tick rows for the CSV trace

    def to_summary_dict(self) -> dict:
        return {
            "seed": self.seed,
            "scenario_hash": self.scenario_hash,
            "outcome": self.outcome.value,
            "final_state": self.final_state.value,
            "duration": round(self.duration, 6),
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
            "max_altitude_loss": round(self.max_altitude_loss, 6),
            "safe_hover_distance": None
            if self.safe_hover_distance is None
            else round(self.safe_hover_distance, 6),
            "n_events": len(self.events),
        }


class _Timeline:
    """Milestone timestamps pulled out of the event stream as it grows."""

    KEYS = ("detect", "confirm", "plan", "arrive", "trigger", "engage", "slip", "freefall",
            "recovery_complete", "hold_confirmed")

    def __init__(self):
        self.t: dict[str, float] = {}

    def observe(self, event: Event):
        if event.kind in self.KEYS and event.kind not in self.t:
            self.t[event.kind] = event.timestamp


def run_trial(
    cfg: ScenarioConfig,
    seed: Optional[int] = None,
    link=None,
    pacer=None,
    frame_hook=None,
) -> TrialResult:
    """Run one seeded trial to a terminal FSM state or the timeout.

    `link` is an optional operator bridge (telemetry out, commands in);
    `pacer` an optional real-time throttle for console runs; `frame_hook`
    receives every rendered depth frame (for frame export).
    """
    cfg.validate()
    if seed is None:
        seed = cfg.seed
    ss = np.random.SeedSequence(seed)
    rng_imu, rng_depth, rng_grasp = (np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(3))

    world = cfg.make_world()
    tree = world.tree
    camera = cfg.camera.build()
    auto_cfg = cfg.make_autonomy()
    gripper = GripperUnit(cfg.gripper)
    log = EventLog()
    timeline = _Timeline()
    state = S.IDLE

    control_rate = cfg.vehicle.control_rate
    dt = cfg.vehicle.physics_dt
    substeps = cfg.vehicle.substeps_per_control_tick
    perception_period = int(round(control_rate / cfg.perception_rate))
    hover_thrust = cfg.vehicle.mass * world.constants.g

    tracked = None
    track_lost = False
    trajectory = None
    traj_t0 = 0.0
    flight_goal = None
    planned_target = None
    hold_sp: Optional[Setpoint] = None
    scheduled_recovery = None
    recovery_active = False
    t_engage = None
    t_state_entry = 0.0
    pending_msgs: list[tuple[str, Optional[str]]] = []  # (message, abort_reason)
    slip_z0 = None
    min_z_after_slip = None
    safe_hover_distance = None
    trace_rows: list[tuple] = []

    def emit(event: Event):
        log.append(event)
        timeline.observe(event)
        if link is not None:
            link.send_event(event)

    def hold_here(yaw=None):
        return Setpoint(
            position=world.vehicle.position.copy(),
            velocity=np.zeros(3),
            yaw=quat.yaw_of(world.vehicle.attitude) if yaw is None else yaw,
        )

    hold_sp = hold_here(cfg.start_yaw)
    n_ticks = int(round(cfg.trial_timeout * control_rate))
    imu_history: deque = deque(maxlen=8)
    frame = None

    for k in range(n_ticks):
        t = k / control_rate
        if pacer is not None:
            pacer.wait(t)

        # operator commands arrive between ticks
        confirms: list[str] = []
        abort_reason = None
        if link is not None:
            for msg in link.poll_commands():
                kind = msg.get("type")
                if kind in ("confirm_detection", "engage_perch", "abort"):
                    confirms.append(kind)
                elif kind == "set_speed" and pacer is not None:
                    pacer.set_factor(float(msg.get("factor", 1.0)))
        for msg, reason in pending_msgs:
            confirms.append(msg)
            if reason:
                abort_reason = reason
        pending_msgs.clear()

        # auto confirm policy at the human gates
        if isinstance(cfg.confirm_policy, AutoAccept) and t - t_state_entry >= cfg.confirm_policy.delay:
            if state is S.AWAIT_DETECT_CONFIRM:
                confirms.append("confirm_detection")
            elif state is S.AWAIT_PERCH_CONFIRM:
                confirms.append("engage_perch")

        # perception
        if state in PERCEPTION_STATES and k % perception_period == 0:
            frame = render_depth(camera, world, rng=rng_depth, noise_std=cfg.depth_noise_std)
            fresh = detect_perch_site(frame, camera, cfg.detector)
            if fresh is not None:
                fresh = localize_candidate(fresh, camera, world.vehicle)
            track_lost = False
            if tracked is None:
                tracked = fresh
            else:
                try:
                    tracked = track_candidate(
                        tracked,
                        fresh,
                        gate=cfg.track_gate,
                        alpha=cfg.track_alpha,
                        max_staleness=cfg.track_max_staleness,
                    )
                except TrackLost:
                    tracked = None
                    track_lost = True
            if frame_hook is not None:
                frame_hook(frame, tracked, t)
            if link is not None and frame is not None:
                link.send_frame(frame, tracked, t)

        # sensors
        imu_history.append(read_imu(world, rng_imu, cfg.imu))
        tof = read_tof(world, cfg.tof)

        # gripper sequencing during the perch phase
        if state is S.PERCH_SEQUENCE:
            if gripper.poll_trigger(tof):
                emit(Event(timestamp=t, kind="trigger", payload={"range": round(tof.range, 6)}))
            if gripper.closure_complete(t) and isinstance(gripper.state, Triggered):
                normal = tracked.approach_normal
                impact = max(0.0, -float(np.dot(world.vehicle.velocity, normal)))
                outcome = gripper.resolve(impact, tree, cfg.grasp, rng_grasp)
                if isinstance(outcome, Engaged):
                    t_engage = t
                    surface_range = tof.range if tof.valid else cfg.gripper.trigger_distance
                    world = enter_perched_pivot(
                        world, normal, surface_range, cfg.gripper.pivot_limit
                    )
                    emit(
                        Event(
                            timestamp=t,
                            kind="engage",
                            payload={
                                "impact_speed": round(impact, 6),
                                "hold_deadline": None
                                if outcome.hold_deadline is None
                                else round(outcome.hold_deadline, 6),
                            },
                        )
                    )
                elif isinstance(outcome, Slipped):
                    emit(Event(timestamp=t, kind="slip", payload={"at_contact": True}))
                    pending_msgs.append(("abort", "slip_at_contact"))
                # MechanicalFailure: the FSM sees the gripper state next tick

        # scheduled stochastic slip while engaged
        if isinstance(gripper.state, Engaged) and gripper.slip_due(t):
            gripper.slip(t)
            emit(Event(timestamp=t, kind="slip", payload={"at_contact": False}))
            world = release_to_freefall(world)
            slip_z0 = float(world.vehicle.position[2])
            min_z_after_slip = slip_z0

        # attachment held through the observation window: mission success
        if (
            t_engage is not None
            and isinstance(gripper.state, Engaged)
            and t >= t_engage + cfg.grasp.slip_window
        ):
            emit(Event(timestamp=t, kind="hold_confirmed", payload={"held": cfg.grasp.slip_window}))
            break

        # search timeout
        if state in (S.SEARCH_TREE, S.AWAIT_DETECT_CONFIRM) and t > cfg.search_timeout:
            if not any(e.kind == "abort" for e in log):
                pending_msgs.append(("abort", "detect_timeout"))

        # failure detector
        freefall = detect_freefall(imu_history, cfg.failure_detector, state)

        ramp_elapsed = None if t_engage is None else t - t_engage
        thrust_zero = ramp_elapsed is not None and ramp_elapsed >= cfg.gentle_perch.duration

        inputs = FsmInputs(
            time=t,
            start_requested=(k == 0),
            candidate=tracked if state is S.SEARCH_TREE else None,
            track_lost=track_lost,
            trajectory_ready=trajectory is not None and state is S.PLANNING,
            dist_to_goal=(
                float(np.linalg.norm(world.vehicle.position - flight_goal))
                if state is S.FLY_TO_PERCH and flight_goal is not None
                else math.inf
            ),
            gripper=gripper.state,
            freefall_detected=freefall,
            latency_elapsed=(
                scheduled_recovery is not None and t >= scheduled_recovery.activate_at - 1e-12
            ),
            thrust_zero=bool(thrust_zero),
            dist_to_recovery=(
                float(np.linalg.norm(world.vehicle.position - scheduled_recovery.setpoint.position))
                if recovery_active
                else math.inf
            ),
            speed=(
                float(np.linalg.norm(world.vehicle.velocity))
                if state is S.RECOVERING
                else 0.0
            ),
            grounded=isinstance(world.phase, Grounded),
            confirms=tuple(confirms),
            abort_reason=abort_reason,
        )
        new_state, events, actions = fsm_step(state, inputs, auto_cfg)
        for e in events:
            emit(e)
        state_changed = new_state is not state
        if state_changed:
            t_state_entry = t
            state = new_state

        for action in actions:
            if action == "plan_trajectory":
                try:
                    target = tracked.target_pose
                    normal = tracked.approach_normal
                    goal = target + cfg.standoff_distance * normal
                    trajectory = plan_perch_trajectory(
                        world.vehicle, goal, normal, cfg.planner
                    )
                    traj_t0 = t
                    flight_goal = goal
                    planned_target = target.copy()
                except (DegenerateTrajectory, InfeasibleLimits) as exc:
                    trajectory = None
                    pending_msgs.append(("abort", "plan_failure"))
            elif action == "follow_trajectory":
                traj_t0 = t
            elif action == "hold_position":
                hold_sp = hold_here()
            elif action == "begin_perch_sequence":
                # the CoM stops one trigger distance short of the surface
                # (where the gripper meets the trunk) and flies the contact
                # leg slowly so tracking lag cannot inflate the impact speed
                try:
                    goal = (
                        tracked.target_pose
                        + cfg.gripper.trigger_distance * tracked.approach_normal
                    )
                    approach_cfg = dataclasses.replace(
                        cfg.planner, cruise_speed=cfg.final_approach_speed
                    )
                    trajectory = plan_perch_trajectory(
                        world.vehicle, goal, tracked.approach_normal, approach_cfg
                    )
                    traj_t0 = t
                    flight_goal = goal
                    gripper.arm()
                except (DegenerateTrajectory, InfeasibleLimits):
                    trajectory = None
                    pending_msgs.append(("abort", "plan_failure"))
            elif action == "schedule_recovery":
                perch_site = tracked.target_pose if tracked is not None else world.vehicle.position
                normal = (
                    tracked.approach_normal if tracked is not None else np.array([-1.0, 0.0, 0.0])
                )
                scheduled_recovery = recovery_reaction(t, perch_site, normal, auto_cfg)
            elif action == "activate_recovery":
                world = world.copy()
                world.phase = FreeFlight()
                recovery_active = True

        # replan when the tracked target drifts from the planned one
        if (
            state is S.FLY_TO_PERCH
            and tracked is not None
            and planned_target is not None
            and float(np.linalg.norm(tracked.target_pose - planned_target)) > cfg.replan_threshold
        ):
            try:
                goal = tracked.target_pose + cfg.standoff_distance * tracked.approach_normal
                trajectory = plan_perch_trajectory(
                    world.vehicle, goal, tracked.approach_normal, cfg.planner
                )
                traj_t0 = t
                flight_goal = goal
                planned_target = tracked.target_pose.copy()
            except (DegenerateTrajectory, InfeasibleLimits):
                pending_msgs.append(("abort", "plan_failure"))

        # setpoint selection and control
        if state in (S.FLY_TO_PERCH, S.PERCH_SEQUENCE) and trajectory is not None:
            sp = sample(trajectory, t - traj_t0)
        elif recovery_active and scheduled_recovery is not None:
            sp = scheduled_recovery.setpoint
        else:
            sp = hold_sp

        if isinstance(world.phase, PerchedPivot):
            thrust = (
                gentle_perch_thrust(ramp_elapsed, hover_thrust, cfg.gentle_perch)
                if ramp_elapsed is not None
                else hover_thrust
            )
            command = ControlCommand(collective_thrust=thrust, attitude_command=quat.IDENTITY.copy())
        elif isinstance(world.phase, (FreeFall, Grounded)):
            command = ControlCommand(collective_thrust=0.0, attitude_command=quat.IDENTITY.copy())
        else:
            command = track(world.vehicle, sp, cfg.gains, cfg.vehicle, g=world.constants.g)

        if pivot_resting(world, command.collective_thrust):
            # braced and motionless: the whole tick is a clock advance
            world.time += substeps * dt
            world.accel_world[:] = 0.0
        else:
            for _ in range(substeps):
                step_world(world, command, dt)

        if min_z_after_slip is not None:
            min_z_after_slip = min(min_z_after_slip, float(world.vehicle.position[2]))

        pitch = world.phase.pitch_angle if isinstance(world.phase, PerchedPivot) else 0.0
        trace_rows.append(
            (
                t,
                *world.vehicle.position,
                *world.vehicle.velocity,
                command.collective_thrust,
                pitch,
                state.value,
            )
        )

        if link is not None and (state_changed or k % max(1, int(control_rate / 10)) == 0):
            link.send_state(state, world, sp, command.collective_thrust, t)

        if state is S.SAFE_HOVER and safe_hover_distance is None and tracked is not None:
            safe_hover_distance = float(
                np.linalg.norm(world.vehicle.position - tracked.target_pose)
            )
        if state in (S.SAFE_HOVER, S.LANDED, S.ABORTED):
            break
    else:
        emit(Event(timestamp=cfg.trial_timeout, kind="timeout", payload={}))

    result = TrialResult(
        seed=seed,
        scenario_hash=scenario_hash(cfg),
        outcome=classify_outcome(log.events),
        final_state=state,
        duration=log.events[-1].timestamp if log.events else 0.0,
        timings=dict(timeline.t),
        max_altitude_loss=(
            0.0 if slip_z0 is None or min_z_after_slip is None else slip_z0 - min_z_after_slip
        ),
        safe_hover_distance=safe_hover_distance,
        events=list(log.events),
        trace=trace_rows,
    )
    return result
